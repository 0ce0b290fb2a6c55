from __future__ import annotations

import json
from pathlib import Path

import pytest

from certchain.chain import GenesisConfig, KeyPair, Network, Node, NodeRole
from certchain.scenario import World, build_world, load_scenario, run_step

REPO = Path(__file__).resolve().parent.parent
SCENARIO = REPO / "scenarios" / "temp_sensor.json"

# Every actor a test might need; keys derive from the seed so runs are reproducible.
ACTORS = ["eu", "spain", "manufacturerA", "manufacturerB", "cabItaly", "stranger",
          "sensor", "devB", "devC", "discoverer", "consumer"]


def scenario_doc() -> dict:
    return load_scenario(SCENARIO)


def setup_steps() -> list[dict]:
    """Scenario steps up to (and including) the controller, without onboarding."""
    steps = scenario_doc()["steps"]
    idx = next(i for i, s in enumerate(steps) if s["op"] == "controller")
    return steps[: idx + 1]


@pytest.fixture
def world(tmp_path) -> World:
    return build_world(tmp_path / "store", ACTORS, seed="tests", difficulty_bits=8)


@pytest.fixture
def deployed(world) -> World:
    for step in setup_steps():
        run_step(world, step)
    return world


def onboard(world: World, device: str = "sensor", device_id: str = "temp-sensor-model1/sn-0001",
            registry: str = "registry") -> dict:
    return run_step(world, {"op": "onboard", "device": device, "device-id": device_id, "registry": registry})


def flow(src: str, dst: str, protocol: int = 17, sport: int = 12, dport: int = 33) -> dict:
    return {"src": src, "dst": dst, "protocol": protocol, "src-port": sport, "dst-port": dport}


def small_network(n_accounts: int = 3, balance: int = 100, validators: int = 1, observers: int = 0,
                  clients: int = 0, bits: int = 8, **genesis) -> tuple[Network, list[KeyPair], GenesisConfig]:
    keys = [KeyPair.from_seed(f"acct/{i}") for i in range(n_accounts)]
    miners = [KeyPair.from_seed(f"miner/{i}") for i in range(validators)]
    config = GenesisConfig(
        allocations=tuple((k.address, balance) for k in keys),
        validators=tuple(m.address for m in miners),
        difficulty_bits=bits,
        **genesis,
    )
    nodes = [Node(config, NodeRole.VALIDATOR, f"v{i}", miner=m.address) for i, m in enumerate(miners)]
    nodes += [Node(config, NodeRole.OBSERVER, f"o{i}") for i in range(observers)]
    nodes += [Node(config, NodeRole.CLIENT, f"c{i}") for i in range(clients)]
    return Network(nodes), keys + miners, config


def dump(obj) -> str:
    return json.dumps(obj, sort_keys=True)


# One line per acceptance criterion, echoed again in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def report(number: int, name: str, ok: bool, detail: str = "") -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {name}" + (f": {detail}" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
