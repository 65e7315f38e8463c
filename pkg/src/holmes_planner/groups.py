"""Tensor/pipeline/data parallel group construction and feasibility checks.

Given degrees (tensor, pipeline, data) with tensor*pipeline*data == N, the
three group matrices are fully determined by the global rank numbering:

* tensor groups: row i holds the t consecutive ranks (i-1)*t+1 .. i*t,
* pipeline groups: row i holds ranks i, i+t*d, i+2*t*d, ..., one per stage,
* data groups: row i holds the d ranks of one tensor slot replicated across
  the data dimension inside one stage block.

Stage j therefore occupies the contiguous rank block ((j-1)*t*d, j*t*d].
Group construction is pure algebra; policy questions (which NIC a group may
use) live in :mod:`holmes_planner.nic_select`.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import InfeasibleConfigError
from .topology import ClusterTopology


class GroupKind(str, Enum):
    TP = "tp"
    PP = "pp"
    DP = "dp"


@dataclass(frozen=True)
class ParallelConfig:
    """Parallelism degrees. The product must equal the device count."""

    tensor: int
    pipeline: int
    data: int

    def __post_init__(self):
        for name in ("tensor", "pipeline", "data"):
            if getattr(self, name) < 1:
                raise InfeasibleConfigError(
                    f"{name} degree must be >= 1, got {getattr(self, name)}"
                )

    @property
    def world_size(self) -> int:
        return self.tensor * self.pipeline * self.data

    def stage_block_size(self) -> int:
        """Ranks per pipeline stage."""
        return self.tensor * self.data


@dataclass(frozen=True)
class GroupMatrix:
    """All groups of one kind; each row is an ordered rank tuple."""

    kind: GroupKind
    rows: tuple[tuple[int, ...], ...]

    @property
    def degree(self) -> int:
        return len(self.rows[0]) if self.rows else 0


@dataclass(frozen=True)
class GroupPlan:
    """The three group matrices for one (config, topology) pair."""

    config: ParallelConfig
    tp: GroupMatrix
    pp: GroupMatrix
    dp: GroupMatrix

    def matrix(self, kind: GroupKind) -> GroupMatrix:
        return {GroupKind.TP: self.tp, GroupKind.PP: self.pp, GroupKind.DP: self.dp}[kind]

    def to_json_dict(self) -> dict:
        return {
            "tp": [list(row) for row in self.tp.rows],
            "pp": [list(row) for row in self.pp.rows],
            "dp": [list(row) for row in self.dp.rows],
        }


@dataclass(frozen=True)
class Diagnostic:
    """One feasibility violation with a stable machine-readable code."""

    code: str
    message: str

    def __str__(self):
        return f"{self.code}: {self.message}"


def _check_degree_product(cfg: ParallelConfig, topo: ClusterTopology):
    if cfg.world_size != topo.total_devices:
        raise InfeasibleConfigError(
            f"degree product {cfg.tensor}*{cfg.pipeline}*{cfg.data}={cfg.world_size} "
            f"does not equal device count {topo.total_devices}"
        )


def build_tp(cfg: ParallelConfig, topo: ClusterTopology) -> GroupMatrix:
    """Tensor groups: pipeline*data rows of ``tensor`` consecutive ranks.

    Every row must stay inside one node, so ``tensor`` has to divide
    ``gpus_per_node``.
    """
    _check_degree_product(cfg, topo)
    t = cfg.tensor
    if topo.gpus_per_node % t != 0:
        raise InfeasibleConfigError(
            f"tensor degree {t} does not divide gpus_per_node "
            f"{topo.gpus_per_node}; tensor groups would straddle nodes"
        )
    rows = tuple(
        tuple((i - 1) * t + j for j in range(1, t + 1))
        for i in range(1, cfg.pipeline * cfg.data + 1)
    )
    return GroupMatrix(GroupKind.TP, rows)


def build_pp(cfg: ParallelConfig, topo: ClusterTopology) -> GroupMatrix:
    """Pipeline groups: tensor*data rows; column j is the stage-j member."""
    _check_degree_product(cfg, topo)
    block = cfg.stage_block_size()
    rows = tuple(
        tuple(i + (j - 1) * block for j in range(1, cfg.pipeline + 1))
        for i in range(1, block + 1)
    )
    return GroupMatrix(GroupKind.PP, rows)


def build_dp(cfg: ParallelConfig, topo: ClusterTopology) -> GroupMatrix:
    """Data groups: pipeline*tensor rows of ``data`` ranks within one stage."""
    _check_degree_product(cfg, topo)
    t, d = cfg.tensor, cfg.data
    rows = tuple(
        tuple(
            (i - 1) % t + (((i - 1) // t) * d + j - 1) * t + 1
            for j in range(1, d + 1)
        )
        for i in range(1, cfg.pipeline * t + 1)
    )
    return GroupMatrix(GroupKind.DP, rows)


def build_plan(cfg: ParallelConfig, topo: ClusterTopology) -> GroupPlan:
    """All three matrices at once."""
    return GroupPlan(
        config=cfg,
        tp=build_tp(cfg, topo),
        pp=build_pp(cfg, topo),
        dp=build_dp(cfg, topo),
    )


def validate(cfg: ParallelConfig, topo: ClusterTopology) -> list[Diagnostic]:
    """Feasibility diagnostics; empty means the channel selector can run.

    Checks, in order: the degree product matches N, the tensor degree fits in
    (and divides) a node, and every cluster holds a whole number of pipeline
    stage blocks so data groups never cross a cluster boundary.  Never
    raises.
    """
    diags: list[Diagnostic] = []
    n = topo.total_devices
    if cfg.world_size != n:
        diags.append(
            Diagnostic(
                "DEGREE_PRODUCT",
                f"tensor*pipeline*data = {cfg.world_size}, device count = {n}",
            )
        )
    g = topo.gpus_per_node
    if cfg.tensor > g:
        diags.append(
            Diagnostic(
                "TP_DEGREE_EXCEEDS_NODE",
                f"tensor degree {cfg.tensor} exceeds gpus_per_node {g}",
            )
        )
    elif g % cfg.tensor != 0:
        diags.append(
            Diagnostic(
                "TP_SPLITS_NODE",
                f"tensor degree {cfg.tensor} does not divide gpus_per_node {g}",
            )
        )
    block = cfg.stage_block_size()
    for cluster in topo.clusters:
        size = g * cluster.node_count
        if size % block != 0:
            diags.append(
                Diagnostic(
                    "STAGE_STRADDLES_CLUSTER",
                    f"stage block ({block} ranks) does not divide cluster "
                    f"{cluster.index} size ({size} devices)",
                )
            )
    return diags


def plan_from_json_dict(doc: dict) -> GroupPlan:
    """Rebuild a plan from its serialized form, checking matrix shapes."""
    try:
        tp_rows = tuple(tuple(int(r) for r in row) for row in doc["tp"])
        pp_rows = tuple(tuple(int(r) for r in row) for row in doc["pp"])
        dp_rows = tuple(tuple(int(r) for r in row) for row in doc["dp"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InfeasibleConfigError(f"malformed plan document: {exc}") from exc
    if not (tp_rows and pp_rows and dp_rows):
        raise InfeasibleConfigError("plan document has an empty matrix")
    cfg = ParallelConfig(
        tensor=len(tp_rows[0]), pipeline=len(pp_rows[0]), data=len(dp_rows[0])
    )
    shapes = {
        GroupKind.TP: (cfg.pipeline * cfg.data, cfg.tensor, tp_rows),
        GroupKind.PP: (cfg.tensor * cfg.data, cfg.pipeline, pp_rows),
        GroupKind.DP: (cfg.pipeline * cfg.tensor, cfg.data, dp_rows),
    }
    for kind, (n_rows, degree, rows) in shapes.items():
        if len(rows) != n_rows or any(len(row) != degree for row in rows):
            raise InfeasibleConfigError(
                f"{kind.value} matrix shape is not {n_rows}x{degree}"
            )
        members = sorted(r for row in rows for r in row)
        if members != list(range(1, cfg.world_size + 1)):
            raise InfeasibleConfigError(
                f"{kind.value} matrix rows do not partition ranks 1..{cfg.world_size}"
            )
    return GroupPlan(
        config=cfg,
        tp=GroupMatrix(GroupKind.TP, tp_rows),
        pp=GroupMatrix(GroupKind.PP, pp_rows),
        dp=GroupMatrix(GroupKind.DP, dp_rows),
    )
