"""Chain files: newline-delimited JSON, one block per line, genesis first.

The genesis line additionally carries the genesis configuration under
``"config"``; its digest is committed in the genesis block's ``extra``
field, so the file is self-contained and the configuration tamper-evident.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

from certchain.chain.block import Block
from certchain.chain.errors import BlockRejected
from certchain.chain.genesis import GenesisConfig


def _line(block: Block, config: GenesisConfig | None = None) -> str:
    d = block.to_dict()
    if config is not None:
        d["config"] = config.to_dict()
    return json.dumps(d, separators=(",", ":"))


def save_chain(path: str | Path, config: GenesisConfig, blocks: list[Block]) -> None:
    path = Path(path)
    if not blocks or blocks[0].height != 0:
        blocks = [config.genesis_block(), *blocks]
    lines = [_line(blocks[0], config)] + [_line(b) for b in blocks[1:]]
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    with os.fdopen(fd, "w") as f:
        f.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def append_block(path: str | Path, block: Block) -> None:
    with open(path, "a") as f:
        f.write(_line(block) + "\n")


def load_chain(path: str | Path) -> tuple[GenesisConfig, list[Block]]:
    """Parse a chain file. Structural corruption raises BlockRejected with the line's height.

    Every line must be exactly the canonical encoding of the block it
    decodes to, so any edit to the file, even one that would decode to the
    same values, is reported.
    """
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise BlockRejected("Corrupt", "invalid UTF-8", height=raw.count(b"\n", 0, e.start)) from e
    if not text:
        raise BlockRejected("BadGenesis", "empty chain file", height=0)
    if not text.endswith("\n"):
        raise BlockRejected("Corrupt", "missing final newline", height=text.count("\n"))
    blocks = []
    config = None
    for i, ln in enumerate(text[:-1].split("\n")):
        try:
            d = json.loads(ln)
            if i == 0:
                config = GenesisConfig.from_dict(d["config"])
            block = Block.from_dict(d)
        except (ValueError, KeyError, TypeError, AttributeError) as e:
            raise BlockRejected("Corrupt", str(e), height=i) from e
        if _line(block, config if i == 0 else None) != ln:
            raise BlockRejected("Corrupt", "non-canonical block encoding", height=i)
        blocks.append(block)
    assert config is not None
    return config, blocks
