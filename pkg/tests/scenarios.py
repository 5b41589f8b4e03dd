"""Small scenario builders shared by the tests."""

from __future__ import annotations

import textwrap

from porcti.config import ScenarioConfig, parse_config_text


def point(body: str = "", protocol: str = "por", n: int = 5, proposals: int = 20) -> ScenarioConfig:
    """One grid point from a YAML fragment layered over a small default scenario."""
    text = f"""
scenario_id: t
protocol: {protocol}
cluster_size: {n}
workload: {{proposals: {proposals}, inter_arrival: 10, start: 500}}
seeds: [0]
"""
    experiment = parse_config_text(text + textwrap.dedent(body))
    return experiment.points[0]
