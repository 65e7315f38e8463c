"""Scenario documents: strict JSON schema, loading, and fingerprinting.

A scenario file declares the topology, model, parallel degrees, partition
strategy, and cost-model knobs in one JSON object.  Unknown keys are
rejected so that a scenario's content hash identifies exactly what was
simulated.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .errors import ConfigError
from .groups import ParallelConfig
from .partition import ModelSpec, PartitionStrategy
from .simulator import CostModel
from .topology import (
    Cluster,
    ClusterTopology,
    DEFAULT_INTRA_NODE_LATENCY_S,
    NicKind,
    NicSpec,
)

_NIC_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"type": "string", "enum": ["infiniband", "roce", "ethernet"]},
        "bandwidth_gbps": {"type": "number", "exclusiveMinimum": 0},
        "latency_s": {"type": "number", "minimum": 0},
    },
    "required": ["kind", "bandwidth_gbps"],
    "additionalProperties": False,
}

_ETHERNET_SCHEMA = {
    "type": "object",
    "properties": {
        "bandwidth_gbps": {"type": "number", "exclusiveMinimum": 0},
        "latency_s": {"type": "number", "minimum": 0},
    },
    "required": ["bandwidth_gbps"],
    "additionalProperties": False,
}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "topology": {
            "type": "object",
            "properties": {
                "clusters": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "properties": {
                            "nodes": {"type": "integer", "minimum": 1},
                            "nic": _NIC_SCHEMA,
                            "device_tflops_peak": {
                                "type": "number",
                                "exclusiveMinimum": 0,
                            },
                            "device_mem_gb": {
                                "type": "number",
                                "exclusiveMinimum": 0,
                            },
                        },
                        "required": ["nodes"],
                        "additionalProperties": False,
                    },
                },
                "gpus_per_node": {"type": "integer", "minimum": 1},
                "ethernet": _ETHERNET_SCHEMA,
                "intra_node_bandwidth_gbps": {
                    "type": "number",
                    "exclusiveMinimum": 0,
                },
                "intra_node_latency_s": {"type": "number", "minimum": 0},
                "inter_cluster_rdma": {"type": "boolean"},
            },
            "required": [
                "clusters",
                "gpus_per_node",
                "ethernet",
                "intra_node_bandwidth_gbps",
            ],
            "additionalProperties": False,
        },
        "model": {
            "type": "object",
            "properties": {
                "layers": {"type": "integer", "minimum": 1},
                "hidden": {"type": "integer", "minimum": 1},
                "heads": {"type": "integer", "minimum": 1},
                "seq_len": {"type": "integer", "minimum": 1},
                "vocab": {"type": "integer", "minimum": 1},
                "global_batch": {"type": "integer", "minimum": 1},
                "micro_batch": {"type": "integer", "minimum": 1},
                "bytes_per_param": {"type": "integer", "minimum": 1},
                "per_layer_mem_gb": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["layers", "hidden", "heads", "global_batch", "micro_batch"],
            "additionalProperties": False,
        },
        "parallel": {
            "type": "object",
            "properties": {
                "t": {"type": "integer", "minimum": 1},
                "p": {"type": "integer", "minimum": 1},
                "d": {"type": "integer", "minimum": 1},
            },
            "required": ["t", "p", "d"],
            "additionalProperties": False,
        },
        "partition": {
            "type": "object",
            "properties": {
                "strategy": {"type": "string", "enum": ["uniform", "self_adapting"]},
                "alpha": {"type": "number", "exclusiveMinimum": 0},
                "cluster_alphas": {
                    "type": "array",
                    "items": {"type": "number", "exclusiveMinimum": 0},
                },
                "cluster_mem_budget_gb": {
                    "type": "array",
                    "items": {"type": "number", "exclusiveMinimum": 0},
                },
            },
            "additionalProperties": False,
        },
        "cost": {
            "type": "object",
            "properties": {
                "eta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "backward_forward_ratio": {"type": "number", "exclusiveMinimum": 0},
                "cluster_speeds_tflops": {
                    "type": "array",
                    "items": {"type": "number", "exclusiveMinimum": 0},
                },
            },
            "additionalProperties": False,
        },
        "notes": {"type": "string"},
    },
    "required": ["topology", "model", "parallel"],
    "additionalProperties": False,
}

_FLAGGED_MODEL_DEFAULTS = ("seq_len", "vocab")


@dataclass(frozen=True)
class PartitionSettings:
    strategy: PartitionStrategy = PartitionStrategy.UNIFORM
    alpha: float = 1.0
    cluster_alphas: tuple[float, ...] | None = None
    cluster_mem_budget_gb: tuple[float, ...] | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    """A fully parsed scenario plus provenance for reproducible reports."""

    topology: ClusterTopology
    model: ModelSpec
    parallel: ParallelConfig
    partition: PartitionSettings
    cost: CostModel
    fingerprint: str
    name: str = "scenario"
    defaults_applied: tuple[str, ...] = ()
    notes: str | None = None


def _nic_from_doc(doc: dict, kind: NicKind | None = None) -> NicSpec:
    return NicSpec(
        kind=kind if kind is not None else NicKind(doc["kind"]),
        bandwidth_gbps=doc["bandwidth_gbps"],
        latency_s=doc.get("latency_s"),
    )


def parse_scenario(doc: dict, raw: bytes, name: str = "scenario") -> ScenarioConfig:
    """Validate a scenario document against the schema and build the objects."""
    try:
        jsonschema.validate(doc, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = ".".join(str(part) for part in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid scenario at {path}: {exc.message}") from exc

    topo_doc = doc["topology"]
    ethernet = _nic_from_doc(topo_doc["ethernet"], kind=NicKind.ETHERNET)
    clusters = []
    for i, cdoc in enumerate(topo_doc["clusters"], start=1):
        nic = _nic_from_doc(cdoc["nic"]) if "nic" in cdoc else ethernet
        clusters.append(
            Cluster(
                index=i,
                node_count=cdoc["nodes"],
                rdma_nic=nic,
                device_tflops_peak=cdoc.get("device_tflops_peak", 312.0),
                device_mem_gb=cdoc.get("device_mem_gb", 80.0),
            )
        )
    topology = ClusterTopology(
        clusters=tuple(clusters),
        gpus_per_node=topo_doc["gpus_per_node"],
        ethernet=ethernet,
        intra_node_bandwidth_gbps=topo_doc["intra_node_bandwidth_gbps"],
        intra_node_latency_s=topo_doc.get(
            "intra_node_latency_s", DEFAULT_INTRA_NODE_LATENCY_S
        ),
        inter_cluster_rdma=topo_doc.get("inter_cluster_rdma", False),
    )

    model_doc = doc["model"]
    defaults = tuple(
        f"model.{key}" for key in _FLAGGED_MODEL_DEFAULTS if key not in model_doc
    )
    model = ModelSpec(
        layers=model_doc["layers"],
        hidden=model_doc["hidden"],
        heads=model_doc["heads"],
        global_batch=model_doc["global_batch"],
        micro_batch=model_doc["micro_batch"],
        seq_len=model_doc.get("seq_len", 2048),
        vocab=model_doc.get("vocab", 51200),
        bytes_per_param=model_doc.get("bytes_per_param", 2),
        per_layer_mem_gb=model_doc.get("per_layer_mem_gb"),
    )

    par_doc = doc["parallel"]
    parallel = ParallelConfig(
        tensor=par_doc["t"], pipeline=par_doc["p"], data=par_doc["d"]
    )

    part_doc = doc.get("partition", {})
    part = PartitionSettings(
        strategy=PartitionStrategy(part_doc.get("strategy", "uniform")),
        alpha=part_doc.get("alpha", 1.0),
        cluster_alphas=(
            tuple(part_doc["cluster_alphas"])
            if "cluster_alphas" in part_doc
            else None
        ),
        cluster_mem_budget_gb=(
            tuple(part_doc["cluster_mem_budget_gb"])
            if "cluster_mem_budget_gb" in part_doc
            else None
        ),
    )

    cost_doc = doc.get("cost", {})
    cost = CostModel(
        eta=cost_doc.get("eta", CostModel.eta),
        backward_forward_ratio=cost_doc.get(
            "backward_forward_ratio", CostModel.backward_forward_ratio
        ),
        cluster_speeds_tflops=(
            tuple(cost_doc["cluster_speeds_tflops"])
            if "cluster_speeds_tflops" in cost_doc
            else None
        ),
    )
    if cost.cluster_speeds_tflops is not None and len(
        cost.cluster_speeds_tflops
    ) != len(clusters):
        raise ConfigError(
            f"cost.cluster_speeds_tflops has {len(cost.cluster_speeds_tflops)} "
            f"entries for {len(clusters)} clusters"
        )
    for key in ("cluster_alphas", "cluster_mem_budget_gb"):
        value = getattr(part, key)
        if value is not None and len(value) not in (len(clusters), len(clusters) - 1):
            raise ConfigError(
                f"partition.{key} has {len(value)} entries for {len(clusters)} clusters"
            )

    return ScenarioConfig(
        topology=topology,
        model=model,
        parallel=parallel,
        partition=part,
        cost=cost,
        fingerprint=hashlib.sha256(raw).hexdigest(),
        name=name,
        defaults_applied=defaults,
        notes=doc.get("notes"),
    )


def load_scenario(path: str | Path) -> ScenarioConfig:
    """Read, parse, and validate a scenario file."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path} is not UTF-8: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: {exc.msg} at line {exc.lineno} column {exc.colno}",
            line=exc.lineno,
            column=exc.colno,
        ) from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return parse_scenario(doc, raw, name=path.stem)
