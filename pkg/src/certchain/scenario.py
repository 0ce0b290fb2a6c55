"""Scripted scenarios over a single-validator desk network.

A scenario document names actors and lists steps; each step refers to
actors, contracts and stored objects by the labels earlier steps gave
them. With the same seed, keys, challenges and block timestamps are
reproducible, so two runs yield the same decision log.

Step ops: ``deploy_authority``, ``issue``, ``revoke``, ``deploy_registry``,
``set_assessment_body``, ``put``, ``register_file``, ``tamper``,
``delete_object``, ``controller``, ``onboard``, ``filter``, ``advance``,
``refresh``, ``disclose``, ``disclosure_status``, ``mine``.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from certchain import identity, mudfile, registry, vulndisc
from certchain.chain import Client, GenesisConfig, KeyPair, Network, Node, NodeRole, to_hex
from certchain.controller import AuthenticationError, Controller, PacketFlow, make_auth_proof
from certchain.store import ContentStore

EPOCH = 1_700_000_000.0
DEFAULT_BALANCE = 1_000


class ScenarioError(Exception):
    pass


@dataclass
class World:
    seed: str
    config: GenesisConfig
    network: Network
    validator: Node
    observer: Node
    store: ContentStore
    keys: dict[str, KeyPair]
    now: float = EPOCH
    labels: dict[str, bytes] = field(default_factory=dict)
    objects: dict[str, tuple[str, bytes]] = field(default_factory=dict)
    credentials: dict[str, str] = field(default_factory=dict)
    controller: Controller | None = None
    log: list[dict[str, Any]] = field(default_factory=list)

    def client(self, actor: str) -> Client:
        return Client(self.key(actor), self.network)

    def key(self, actor: str) -> KeyPair:
        try:
            return self.keys[actor]
        except KeyError:
            raise ScenarioError(f"unknown actor {actor!r}") from None

    def label(self, name: str) -> bytes:
        if name in self.labels:
            return self.labels[name]
        if name in self.keys:
            return self.keys[name].address
        if name.startswith("0x"):
            return bytes.fromhex(name[2:])
        raise ScenarioError(f"unknown label {name!r}")

    @property
    def state(self):
        return self.observer.state


def build_world(store_dir: str | Path, actors: list[str], seed: str = "certchain",
                difficulty_bits: int = 8, balance: int = DEFAULT_BALANCE, **genesis: Any) -> World:
    keys = {a: KeyPair.from_seed(f"{seed}/{a}") for a in actors}
    miner = KeyPair.from_seed(f"{seed}/validator")
    config = GenesisConfig(
        allocations=tuple((k.address, balance) for k in keys.values()),
        validators=(miner.address,),
        difficulty_bits=difficulty_bits,
        timestamp=int(EPOCH),
        **genesis,
    )
    world: World
    clock = lambda: int(world.now)  # noqa: E731
    validator = Node(config, NodeRole.VALIDATOR, "validator", miner=miner.address, clock=clock)
    observer = Node(config, NodeRole.OBSERVER, "controller-view", clock=clock)
    world = World(seed, config, Network([validator, observer]), validator, observer, ContentStore(store_dir), keys)
    return world


def _flow(world: World, f: dict[str, Any]) -> PacketFlow:
    return PacketFlow(world.label(f["src"]), world.label(f["dst"]), int(f["protocol"]),
                      int(f["src-port"]), int(f["dst-port"]))


def _read_object(spec: str, base: Path) -> bytes:
    if spec.startswith("fixture:"):
        return mudfile.fixture(spec[len("fixture:"):])
    return (base / spec).read_bytes()


def run_step(world: World, step: dict[str, Any], base: Path = Path(".")) -> dict[str, Any] | None:
    op = step["op"]
    if op == "deploy_authority":
        cert = ""
        if step.get("certificate-of"):
            cert = world.credentials.get(step["certificate-of"], "")
        addr = identity.deploy_authority(world.client(step["actor"]), step["name"], cert)
        world.labels[step["as"]] = addr
        return {"op": op, "contract": to_hex(addr)}
    if op == "issue":
        subject = world.key(step["subject"])
        cert = identity.SubjectCertificate.for_keypair(subject, identity.Role(step["role"]), step.get("metadata", ""))
        ev = identity.issue_certificate(world.client(step["actor"]), world.label(step["authority"]),
                                        step["subject-name"], cert)
        world.credentials[step["subject"]] = ev.subject_certificate
        return {"op": op, "event": ev.to_dict()}
    if op == "revoke":
        ev = identity.revoke_certificate(world.client(step["actor"]), world.label(step["authority"]), step["subject-name"])
        return {"op": op, "event": ev.to_dict()}
    if op == "deploy_registry":
        addr = registry.deploy_registry(world.client(step["actor"]), step["manufacturer-name"],
                                        world.label(step["id-contract"]), step["device-id"])
        world.labels[step["as"]] = addr
        return {"op": op, "contract": to_hex(addr)}
    if op == "set_assessment_body":
        registry.set_assessment_body(world.client(step["actor"]), world.label(step["registry"]),
                                     world.label(step["body"]), step["body-name"], world.label(step["body-id-contract"]))
        return {"op": op}
    if op == "put":
        location, digest = world.store.put(_read_object(step["file"], base))
        world.objects[step["as"]] = (location, digest)
        return {"op": op, "location": location, "hash": to_hex(digest)}
    if op == "register_file":
        location, digest = world.objects[step["object"]]
        ev = registry.register_file(world.client(step["actor"]), world.label(step["registry"]), step["type"], location, digest)
        return {"op": op, "event": ev.to_dict()}
    if op == "tamper":
        path = world.store.path_of(world.objects[step["object"]][0])
        data = bytearray(path.read_bytes())
        data[int(step.get("offset", len(data) // 2))] ^= 0x01
        path.write_bytes(bytes(data))
        return {"op": op}
    if op == "delete_object":
        world.store.path_of(world.objects[step["object"]][0]).unlink()
        return {"op": op}
    if op == "controller":
        inventory = {world.label(k): v for k, v in step.get("inventory", {}).items()}
        world.controller = Controller(world.observer, world.store, world.label(step["root"]), inventory,
                                      clock=lambda: world.now, rng=random.Random(f"{world.seed}/challenges"))
        return {"op": op}
    if op == "onboard":
        ctl = _controller(world)
        kp = world.key(step["device"])
        proof = make_auth_proof(kp, step["device-id"], world.credentials.get(step["device"], ""),
                                world.label(step["registry"]), ctl.issue_challenge())
        try:
            rec = ctl.onboard(proof)
        except AuthenticationError as e:
            return {"op": op, "device": step["device"], "status": "Rejected", "reason": e.code}
        return {"op": op, "device": step["device"], "status": rec.status.value, "reason": rec.reason,
                "detail": rec.detail, "rules": [r.rule_id for r in rec.installed_rules]}
    if op == "filter":
        ctl = _controller(world)
        out = []
        for f in step["flows"]:
            decision = ctl.decide(_flow(world, f))
            entry = {"flow": {k: f[k] for k in ("src", "dst", "protocol", "src-port", "dst-port")}}
            entry.update(decision.to_dict())
            out.append(entry)
            world.log.append(entry)
        return {"op": op, "decisions": out}
    if op == "advance":
        world.now += float(step.get("hours", 0)) * 3600 + float(step.get("seconds", 0))
        return {"op": op, "now": world.now}
    if op == "refresh":
        ctl = _controller(world)
        rec = ctl.records[world.key(step["device"]).address]
        outcome = ctl.refresh(rec)
        return {"op": op, "device": step["device"], "outcome": outcome, "status": rec.status.value, "reason": rec.reason}
    if op == "disclose":
        mfr = world.key(step["manufacturer"])
        d = vulndisc.disclose(world.client(step["actor"]), world.label(step["registry"]),
                              step["details"].encode(), mfr.public_key, world.store)
        world.labels[step["as"]] = d.id
        return {"op": op, "disclosure": d.to_dict()}
    if op == "disclosure_status":
        d = vulndisc.update_status(world.client(step["actor"]), world.label(step["registry"]),
                                   world.label(step["disclosure"]), step["status"])
        return {"op": op, "disclosure": d.to_dict()}
    if op == "mine":
        for _ in range(int(step.get("blocks", 1))):
            world.network.mine()
        return {"op": op, "height": world.validator.height}
    raise ScenarioError(f"unknown op {op!r}")


def _controller(world: World) -> Controller:
    if world.controller is None:
        raise ScenarioError("no controller configured; add a 'controller' step first")
    return world.controller


def run_scenario(doc: dict[str, Any], store_dir: str | Path, base: Path = Path(".")) -> tuple[World, list[dict[str, Any]]]:
    world = build_world(
        store_dir,
        list(doc["actors"]),
        seed=str(doc.get("seed", "certchain")),
        difficulty_bits=int(doc.get("difficulty-bits", 8)),
    )
    results = []
    for i, step in enumerate(doc["steps"]):
        try:
            results.append(run_step(world, step, base))
        except (KeyError, ScenarioError) as e:
            raise ScenarioError(f"step {i} ({step.get('op')}): {e}") from e
    return world, results


def load_scenario(path: str | Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text())
