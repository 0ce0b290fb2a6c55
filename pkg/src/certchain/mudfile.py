"""Parser, validator and ACL compiler for a strict subset of RFC 8520.

Supported: the ``ietf-mud:mud`` container, ``ipv6-acl-type`` ACLs whose
ACEs match on ``same-manufacturer``, the IPv6 ``protocol`` field and
``udp``/``tcp`` source/destination ports with operator ``eq``, with
forwarding action ``accept``. Anything else is rejected: unknown keys are
parse errors, unsupported values are validation violations. Nothing is
ever silently dropped.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from importlib import resources
from typing import Any, Mapping

MUD = "ietf-mud:mud"
ACLS = "ietf-access-control-list:acls"
ACL_TYPE = "ipv6-acl-type"
TRANSPORT_PROTOCOL = {"udp": 17, "tcp": 6}
CACHE_VALIDITY_DEFAULT = 48
CACHE_VALIDITY_RANGE = (1, 168)

_MUD_FIELDS = {
    "mud-version", "mud-url", "last-update", "cache-validity", "is-supported", "systeminfo",
    "mfg-name", "documentation", "model-name", "from-device-policy", "to-device-policy",
}


class MudError(ValueError):
    code = "MudError"

    def __init__(self, path: str, message: str = "") -> None:
        self.path = path
        super().__init__(f"{self.code} at {path}" + (f": {message}" if message else ""))


class MudSyntaxError(MudError):
    code = "SyntaxError"


class UnknownConstruct(MudError):
    code = "UnknownConstruct"


class MissingField(MudError):
    code = "MissingField"


class BadType(MudError):
    code = "BadType"


class MudInvalid(ValueError):
    def __init__(self, violations: list[Violation]) -> None:
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


@dataclass(frozen=True)
class Violation:
    code: str
    path: str
    message: str = ""

    def __str__(self) -> str:
        return f"{self.code} at {self.path}" + (f": {self.message}" if self.message else "")


@dataclass(frozen=True)
class PortMatch:
    operator: str
    port: int


@dataclass(frozen=True)
class Ace:
    name: str
    same_manufacturer: str | None = None
    protocol: int | None = None
    transport: str | None = None
    source_port: PortMatch | None = None
    destination_port: PortMatch | None = None
    forwarding: str = "accept"


@dataclass(frozen=True)
class Acl:
    name: str
    type: str
    aces: tuple[Ace, ...]


@dataclass(frozen=True)
class MudFile:
    mud_version: int
    mud_url: str
    last_update: datetime
    is_supported: bool
    cache_validity: int = CACHE_VALIDITY_DEFAULT
    systeminfo: str | None = None
    mfg_name: str | None = None
    documentation: str | None = None
    model_name: str | None = None
    from_device_policy: tuple[str, ...] = ()
    to_device_policy: tuple[str, ...] = ()
    acls: tuple[Acl, ...] = ()

    def acl(self, name: str) -> Acl | None:
        for a in self.acls:
            if a.name == name:
                return a
        return None


# parsing


def _obj(v: Any, path: str, allowed: set[str]) -> dict:
    if not isinstance(v, dict):
        raise BadType(path, "expected an object")
    for k in v:
        if k not in allowed:
            raise UnknownConstruct(f"{path}/{k}")
    return v


def _req(d: dict, key: str, path: str) -> Any:
    if key not in d:
        raise MissingField(f"{path}/{key}")
    return d[key]


def _typed(v: Any, t: type, path: str) -> Any:
    ok = isinstance(v, t) and not (t is int and isinstance(v, bool))
    if not ok:
        raise BadType(path, f"expected {t.__name__}")
    return v


def _opt_str(d: dict, key: str, path: str) -> str | None:
    return _typed(d[key], str, f"{path}/{key}") if key in d else None


def _list(v: Any, path: str) -> list:
    if not isinstance(v, list):
        raise BadType(path, "expected an array")
    return v


def _timestamp(v: Any, path: str) -> datetime:
    s = _typed(v, str, path)
    try:
        ts = datetime.fromisoformat(s[:-1] + "+00:00" if s.endswith("Z") else s)
    except ValueError:
        raise BadType(path, "expected an RFC 3339 timestamp") from None
    if ts.tzinfo is None:
        raise BadType(path, "timestamp needs a UTC offset")
    return ts


def _policy(v: Any, path: str) -> tuple[str, ...]:
    lists = _obj(_req(_obj(v, path, {"access-lists"}), "access-lists", path), f"{path}/access-lists", {"access-list"})
    entries = _list(_req(lists, "access-list", f"{path}/access-lists"), f"{path}/access-lists/access-list")
    names = []
    for i, e in enumerate(entries):
        p = f"{path}/access-lists/access-list[{i}]"
        names.append(_typed(_req(_obj(e, p, {"name"}), "name", p), str, f"{p}/name"))
    return tuple(names)


def _port(v: Any, path: str) -> PortMatch:
    d = _obj(v, path, {"operator", "port"})
    return PortMatch(
        _typed(_req(d, "operator", path), str, f"{path}/operator"),
        _typed(_req(d, "port", path), int, f"{path}/port"),
    )


def _ace(v: Any, path: str) -> Ace:
    d = _obj(v, path, {"name", "matches", "actions"})
    name = _typed(_req(d, "name", path), str, f"{path}/name")
    mp = f"{path}/matches"
    matches = _obj(_req(d, "matches", path), mp, {MUD, "ipv6", "udp", "tcp"})
    same_mfg = protocol = transport = sport = dport = None
    if MUD in matches:
        m = _obj(matches[MUD], f"{mp}/{MUD}", {"same-manufacturer"})
        same_mfg = _opt_str(m, "same-manufacturer", f"{mp}/{MUD}")
    if "ipv6" in matches:
        m = _obj(matches["ipv6"], f"{mp}/ipv6", {"protocol"})
        if "protocol" in m:
            protocol = _typed(m["protocol"], int, f"{mp}/ipv6/protocol")
    for proto in ("udp", "tcp"):
        if proto not in matches:
            continue
        if transport is not None:
            raise UnknownConstruct(f"{mp}/{proto}", "at most one transport match per ace")
        transport = proto
        m = _obj(matches[proto], f"{mp}/{proto}", {"source-port", "destination-port"})
        if "source-port" in m:
            sport = _port(m["source-port"], f"{mp}/{proto}/source-port")
        if "destination-port" in m:
            dport = _port(m["destination-port"], f"{mp}/{proto}/destination-port")
    actions = _obj(_req(d, "actions", path), f"{path}/actions", {"forwarding"})
    forwarding = _typed(_req(actions, "forwarding", f"{path}/actions"), str, f"{path}/actions/forwarding")
    return Ace(name, same_mfg, protocol, transport, sport, dport, forwarding)


def _acl(v: Any, path: str) -> Acl:
    d = _obj(v, path, {"name", "type", "aces"})
    aces = _obj(_req(d, "aces", path), f"{path}/aces", {"ace"})
    entries = _list(_req(aces, "ace", f"{path}/aces"), f"{path}/aces/ace")
    return Acl(
        _typed(_req(d, "name", path), str, f"{path}/name"),
        _typed(_req(d, "type", path), str, f"{path}/type"),
        tuple(_ace(e, f"{path}/aces/ace[{i}]") for i, e in enumerate(entries)),
    )


def parse(data: bytes | str) -> MudFile:
    """Parse MUD JSON. Raises a :class:`MudError` subclass on any structural problem."""
    try:
        if isinstance(data, bytes):
            data = data.decode("utf-8")
        doc = json.loads(data)
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise MudSyntaxError("", str(e)) from e
    top = _obj(doc, "", {MUD, ACLS})
    p = f"/{MUD}"
    mud = _obj(_req(top, MUD, ""), p, _MUD_FIELDS)
    acls: tuple[Acl, ...] = ()
    if ACLS in top:
        container = _obj(top[ACLS], f"/{ACLS}", {"acl"})
        entries = _list(_req(container, "acl", f"/{ACLS}"), f"/{ACLS}/acl")
        acls = tuple(_acl(e, f"/{ACLS}/acl[{i}]") for i, e in enumerate(entries))
    return MudFile(
        mud_version=_typed(_req(mud, "mud-version", p), int, f"{p}/mud-version"),
        mud_url=_typed(_req(mud, "mud-url", p), str, f"{p}/mud-url"),
        last_update=_timestamp(_req(mud, "last-update", p), f"{p}/last-update"),
        is_supported=_typed(_req(mud, "is-supported", p), bool, f"{p}/is-supported"),
        cache_validity=_typed(mud.get("cache-validity", CACHE_VALIDITY_DEFAULT), int, f"{p}/cache-validity"),
        systeminfo=_opt_str(mud, "systeminfo", p),
        mfg_name=_opt_str(mud, "mfg-name", p),
        documentation=_opt_str(mud, "documentation", p),
        model_name=_opt_str(mud, "model-name", p),
        from_device_policy=_policy(mud["from-device-policy"], f"{p}/from-device-policy") if "from-device-policy" in mud else (),
        to_device_policy=_policy(mud["to-device-policy"], f"{p}/to-device-policy") if "to-device-policy" in mud else (),
        acls=acls,
    )


def serialize(m: MudFile) -> bytes:
    mud: dict[str, Any] = {
        "mud-version": m.mud_version,
        "mud-url": m.mud_url,
        "last-update": m.last_update.isoformat(),
        "cache-validity": m.cache_validity,
        "is-supported": m.is_supported,
    }
    for key, value in (("systeminfo", m.systeminfo), ("mfg-name", m.mfg_name),
                       ("documentation", m.documentation), ("model-name", m.model_name)):
        if value is not None:
            mud[key] = value
    for key, names in (("from-device-policy", m.from_device_policy), ("to-device-policy", m.to_device_policy)):
        if names:
            mud[key] = {"access-lists": {"access-list": [{"name": n} for n in names]}}
    doc: dict[str, Any] = {MUD: mud}
    if m.acls:
        doc[ACLS] = {"acl": [_acl_json(a) for a in m.acls]}
    return json.dumps(doc, indent=2).encode("utf-8")


def _acl_json(a: Acl) -> dict[str, Any]:
    aces = []
    for e in a.aces:
        matches: dict[str, Any] = {}
        if e.same_manufacturer is not None:
            matches[MUD] = {"same-manufacturer": e.same_manufacturer}
        if e.protocol is not None:
            matches["ipv6"] = {"protocol": e.protocol}
        if e.transport is not None:
            ports = {}
            if e.destination_port is not None:
                ports["destination-port"] = {"operator": e.destination_port.operator, "port": e.destination_port.port}
            if e.source_port is not None:
                ports["source-port"] = {"operator": e.source_port.operator, "port": e.source_port.port}
            matches[e.transport] = ports
        aces.append({"name": e.name, "matches": matches, "actions": {"forwarding": e.forwarding}})
    return {"name": a.name, "type": a.type, "aces": {"ace": aces}}


# validation


def validate(m: MudFile) -> list[Violation]:
    """Semantic checks. An empty list means the file is acceptable."""
    out: list[Violation] = []
    if m.mud_version != 1:
        out.append(Violation("UnsupportedVersion", "mud-version", f"got {m.mud_version}"))
    lo, hi = CACHE_VALIDITY_RANGE
    if not lo <= m.cache_validity <= hi:
        out.append(Violation("CacheValidityRange", "cache-validity", f"{m.cache_validity} not in [{lo}, {hi}]"))

    names = [a.name for a in m.acls]
    for n in sorted({n for n in names if names.count(n) > 1}):
        out.append(Violation("DuplicateAclName", f"acl[{n}]"))
    refs = [("from-device-policy", n) for n in m.from_device_policy] + [("to-device-policy", n) for n in m.to_device_policy]
    for policy, n in refs:
        if n not in names:
            out.append(Violation("DanglingAclName", policy, n))
    for n in dict.fromkeys(names):
        count = sum(1 for _, r in refs if r == n)
        if count == 0:
            out.append(Violation("UnreferencedAcl", f"acl[{n}]"))
        elif count > 1:
            out.append(Violation("AclReferencedTwice", f"acl[{n}]"))

    for a in m.acls:
        base = f"acl[{a.name}]"
        if not a.name:
            out.append(Violation("EmptyName", base))
        if a.type != ACL_TYPE:
            out.append(Violation("UnsupportedAclType", base, a.type))
        for e in a.aces:
            out.extend(_validate_ace(e, f"{base}/ace[{e.name}]"))
    return out


def _validate_ace(e: Ace, path: str) -> list[Violation]:
    out = []
    if not e.name:
        out.append(Violation("EmptyName", path))
    if e.same_manufacturer is None and e.protocol is None and e.transport is None:
        out.append(Violation("EmptyMatches", path))
    if e.same_manufacturer == "":
        out.append(Violation("EmptyName", f"{path}/same-manufacturer"))
    if e.protocol is not None and not 0 <= e.protocol <= 255:
        out.append(Violation("ProtocolRange", f"{path}/protocol", str(e.protocol)))
    if e.transport is not None and e.protocol is not None and e.protocol != TRANSPORT_PROTOCOL[e.transport]:
        out.append(Violation("ProtocolMismatch", f"{path}/protocol", f"{e.transport} with protocol {e.protocol}"))
    for label, pm in (("source-port", e.source_port), ("destination-port", e.destination_port)):
        if pm is None:
            continue
        if pm.operator != "eq":
            out.append(Violation("UnsupportedOperator", f"{path}/{label}", pm.operator))
        if not 0 <= pm.port <= 65535:
            out.append(Violation("PortRange", f"{path}/{label}", str(pm.port)))
    if e.forwarding != "accept":
        out.append(Violation("UnsupportedAction", f"{path}/actions", e.forwarding))
    return out


def load(data: bytes | str) -> MudFile:
    """Parse and validate; raise MudInvalid on any violation."""
    m = parse(data)
    violations = validate(m)
    if violations:
        raise MudInvalid(violations)
    return m


# compilation


class Direction(str, enum.Enum):
    FROM_DEVICE = "FromDevice"
    TO_DEVICE = "ToDevice"


@dataclass(frozen=True)
class AclRule:
    rule_id: str
    direction: Direction
    peers: frozenset[bytes] | None
    protocol: int | None
    src_port: int | None
    dst_port: int | None
    action: str = "accept"

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.rule_id,
            "direction": self.direction.value,
            "peers": None if self.peers is None else ["0x" + p.hex() for p in sorted(self.peers)],
            "protocol": self.protocol,
            "src_port": self.src_port,
            "dst_port": self.dst_port,
            "action": self.action,
        }


def compile_rules(m: MudFile, inventory: Mapping[bytes, str]) -> list[AclRule]:
    """One rule per (policy direction, ace); ``rule_id`` is ``<acl>/<ace>``.

    ``same-manufacturer`` resolves against ``inventory`` (address -> mfg-name).
    A ``None`` peer set is a wildcard; an empty one matches nothing.
    """
    violations = validate(m)
    if violations:
        raise MudInvalid(violations)
    rules = []
    for direction, names in ((Direction.FROM_DEVICE, m.from_device_policy), (Direction.TO_DEVICE, m.to_device_policy)):
        for acl_name in names:
            acl = m.acl(acl_name)
            assert acl is not None
            for e in acl.aces:
                peers = None
                if e.same_manufacturer is not None:
                    peers = frozenset(a for a, mfg in inventory.items() if mfg == e.same_manufacturer)
                protocol = e.protocol
                if protocol is None and e.transport is not None:
                    protocol = TRANSPORT_PROTOCOL[e.transport]
                rules.append(AclRule(
                    rule_id=f"{acl.name}/{e.name}",
                    direction=direction,
                    peers=peers,
                    protocol=protocol,
                    src_port=e.source_port.port if e.source_port else None,
                    dst_port=e.destination_port.port if e.destination_port else None,
                    action=e.forwarding,
                ))
    return rules


def _as_datetime(t: datetime | float | int) -> datetime:
    if isinstance(t, datetime):
        return t
    return datetime.fromtimestamp(t, tz=timezone.utc)


def is_fresh(m: MudFile, fetched_at: datetime | float, now: datetime | float) -> bool:
    """True while strictly less than ``cache-validity`` hours have passed."""
    return _as_datetime(now) - _as_datetime(fetched_at) < timedelta(hours=m.cache_validity)


def fixture(name: str = "temp_sensor_mud.json") -> bytes:
    return resources.files("certchain").joinpath("data", name).read_bytes()
