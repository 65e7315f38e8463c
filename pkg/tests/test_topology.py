import pytest

import holmes_planner as hp
from helpers import ETH, IB, ROCE, make_topo, mixed_topo_16, single_topo


def test_rank_of_first_device_is_one():
    topo = mixed_topo_16()
    assert hp.rank_of(topo, hp.DeviceCoord(1, 1, 1)) == 1


def test_rank_of_hand_derived():
    topo = mixed_topo_16()  # f=[2,2], G=4
    assert hp.rank_of(topo, hp.DeviceCoord(2, 1, 1)) == 9
    assert hp.rank_of(topo, hp.DeviceCoord(1, 2, 4)) == 8


def test_coord_of_hand_derived():
    topo = mixed_topo_16()
    assert hp.coord_of(topo, 1) == hp.DeviceCoord(1, 1, 1)
    assert hp.coord_of(topo, 9) == hp.DeviceCoord(2, 1, 1)
    assert hp.coord_of(topo, 16) == hp.DeviceCoord(2, 2, 4)


@pytest.mark.parametrize(
    "specs,g",
    [
        ([(IB, 200.0, 2), (ROCE, 200.0, 2)], 4),
        ([(IB, 100.0, 1), (ROCE, 200.0, 3), (IB, 400.0, 2)], 8),
        ([(IB, 200.0, 16), (ROCE, 200.0, 16)], 32),  # N = 1024
    ],
)
def test_round_trip_exhaustive(specs, g):
    topo = make_topo(specs, gpus_per_node=g)
    for rank in range(1, topo.total_devices + 1):
        assert hp.rank_of(topo, hp.coord_of(topo, rank)) == rank


def test_rank_bijective_over_coords():
    topo = make_topo([(IB, 200.0, 2), (ROCE, 200.0, 3)], gpus_per_node=4)
    seen = set()
    for c in range(1, 3):
        for k in range(1, topo.clusters[c - 1].node_count + 1):
            for j in range(1, 5):
                seen.add(hp.rank_of(topo, hp.DeviceCoord(c, k, j)))
    assert seen == set(range(1, topo.total_devices + 1))


def test_cluster_rank_contiguity():
    topo = make_topo([(IB, 200.0, 1), (ROCE, 200.0, 3)], gpus_per_node=4)
    assert list(topo.cluster_rank_span(1)) == list(range(1, 5))
    assert list(topo.cluster_rank_span(2)) == list(range(5, 17))


def test_node_locality_of_rank_blocks():
    topo = make_topo([(IB, 200.0, 2), (ROCE, 200.0, 2)], gpus_per_node=4)
    for node in range(1, topo.total_nodes + 1):
        ranks = range((node - 1) * 4 + 1, node * 4 + 1)
        coords = {(hp.coord_of(topo, r).cluster, hp.coord_of(topo, r).node) for r in ranks}
        assert len(coords) == 1


def test_nic_of_rank():
    topo = mixed_topo_16()
    assert hp.nic_of_rank(topo, 1).kind is IB
    assert hp.nic_of_rank(topo, 9).kind is ROCE


def test_nic_of_rank_ethernet_only_cluster():
    topo = make_topo([(ETH, 25.0, 2)], gpus_per_node=4)
    assert hp.nic_of_rank(topo, 1).kind is ETH


@pytest.mark.parametrize(
    "coord,field",
    [
        (hp.DeviceCoord(3, 1, 1), "cluster"),
        (hp.DeviceCoord(1, 3, 1), "node"),
        (hp.DeviceCoord(1, 1, 5), "gpu"),
        (hp.DeviceCoord(0, 1, 1), "cluster"),
    ],
)
def test_invalid_coordinate_names_field(coord, field):
    topo = mixed_topo_16()
    with pytest.raises(hp.InvalidCoordinateError, match=field):
        hp.rank_of(topo, coord)


@pytest.mark.parametrize("rank", [0, -1, 17])
def test_invalid_rank_rejected(rank):
    with pytest.raises(hp.InvalidRankError):
        hp.coord_of(mixed_topo_16(), rank)


def test_nic_default_latencies():
    assert hp.NicSpec(IB, 200.0).latency_s == pytest.approx(5e-6)
    assert hp.NicSpec(ROCE, 200.0).latency_s == pytest.approx(5e-6)
    assert hp.NicSpec(ETH, 25.0).latency_s == pytest.approx(30e-6)
    assert hp.NicSpec(ETH, 25.0, latency_s=1e-5).latency_s == pytest.approx(1e-5)


def test_bad_nic_and_cluster_values_rejected():
    with pytest.raises(hp.TopologyError):
        hp.NicSpec(IB, 0.0)
    with pytest.raises(hp.TopologyError):
        hp.NicSpec(IB, 200.0, latency_s=-1.0)
    with pytest.raises(hp.TopologyError):
        hp.Cluster(1, 0, hp.NicSpec(IB, 200.0))
    with pytest.raises(hp.TopologyError):
        hp.Cluster(1, 1, hp.NicSpec(IB, 200.0), device_tflops_peak=0.0)


def test_topology_invariants_rejected():
    ib = hp.NicSpec(IB, 200.0)
    eth = hp.NicSpec(ETH, 25.0)
    with pytest.raises(hp.TopologyError, match="contiguous"):
        hp.ClusterTopology(
            clusters=(hp.Cluster(2, 1, ib),),
            gpus_per_node=4,
            ethernet=eth,
            intra_node_bandwidth_gbps=2400.0,
        )
    with pytest.raises(hp.TopologyError, match="ethernet"):
        hp.ClusterTopology(
            clusters=(hp.Cluster(1, 1, ib),),
            gpus_per_node=4,
            ethernet=ib,
            intra_node_bandwidth_gbps=2400.0,
        )


def test_total_devices():
    topo = single_topo(n_nodes=3, gpus_per_node=8)
    assert topo.total_devices == 24
    assert topo.total_nodes == 3
