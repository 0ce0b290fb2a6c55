from __future__ import annotations

import hashlib

import pytest

from certchain import mudfile, store
from certchain.store import ContentStore, EmptyContent, NotFound

# sha256 of the bundled completed MUD fixture, frozen from `sha256sum`.
TEMP_SENSOR_MUD_SHA256 = "cf50edbf65fe312ed31f8423067ac2a2c5d23318b609b2141185c9d7f7a6daaf"


def test_put_fixture_gives_stable_location(tmp_path):
    s = ContentStore(tmp_path)
    location, digest = s.put(mudfile.fixture("temp_sensor_mud.json"))
    assert digest.hex() == TEMP_SENSOR_MUD_SHA256
    assert location == "store://" + TEMP_SENSOR_MUD_SHA256
    assert ContentStore(tmp_path / "other").put(mudfile.fixture("temp_sensor_mud.json")) == (location, digest)


def test_put_twice_dedups(tmp_path):
    s = ContentStore(tmp_path)
    assert s.put(b"abc") == s.put(b"abc")
    assert len(list(tmp_path.rglob("*"))) == 3  # objects/, objects/<hh>/, the file


def test_put_empty_rejected(tmp_path):
    with pytest.raises(EmptyContent):
        ContentStore(tmp_path).put(b"")


def test_roundtrip_and_persistence(tmp_path):
    location, _ = ContentStore(tmp_path).put(b"\x00payload\xff")
    assert ContentStore(tmp_path).get(location) == b"\x00payload\xff"
    assert location in ContentStore(tmp_path)


def test_unknown_location(tmp_path):
    s = ContentStore(tmp_path)
    with pytest.raises(NotFound):
        s.get("store://" + "00" * 32)
    with pytest.raises(NotFound):
        s.get("https://elsewhere/x")
    with pytest.raises(NotFound):
        s.get("store://../../etc/passwd")


def test_verify():
    content = b"hello"
    h = hashlib.sha256(content).digest()
    assert store.verify(content, h)
    assert not store.verify(b"hellp", h)
    assert store.verify(b"", hashlib.sha256(b"").digest())
    assert not store.verify(content, h[:31])


def test_no_temp_files_left_behind(tmp_path):
    s = ContentStore(tmp_path)
    for i in range(5):
        s.put(bytes([i + 1]) * 10)
    names = [p.name for p in tmp_path.rglob("*") if p.is_file()]
    assert len(names) == 5 and all(len(n) == 64 for n in names)
