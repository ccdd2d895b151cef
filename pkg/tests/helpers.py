"""Independent oracles shared by the module tests and the acceptance suite.

Everything here deliberately reimplements behavior from scratch (plain
dicts, brute-force product enumeration) so it can disagree with the
production code path.
"""

import itertools
import random

from cransim.cluster import Cluster, NodeRole, NodeSpec, ResourceUsage, default_pod_cidr
from cransim.orchestrator import (
    NodeSelector,
    Placement,
    PodInstance,
    PodKind,
    PodPhase,
    StatefulSetSpec,
    remaining_demand,
    schedule,
)
from cransim.registry import Registry

REGISTRY_KEYS = [
    f"pods/{kind}-{i}/{leaf}"
    for kind in ("rrh", "bbu")
    for i in range(4)
    for leaf in ("ip", "sim")
]


class SequentialOracle:
    """Reference key-value semantics: a plain dict plus a mutation log."""

    def __init__(self):
        self.data = {}
        self.log = []  # (kind, key, value) per successful mutation

    def put(self, key, value):
        self.data[key] = value
        self.log.append(("PUT", key, value))

    def get(self, key):
        return self.data.get(key)

    def delete(self, key):
        if key not in self.data:
            return False
        del self.data[key]
        self.log.append(("DELETE", key, b""))
        return True


def run_trace(ops, registry=None, oracle=None):
    """Drive the store and the oracle through one op sequence, asserting
    every observable result matches."""
    registry = registry or Registry()
    oracle = oracle or SequentialOracle()
    revisions = []
    for op, key, value in ops:
        if op == "put":
            revisions.append(registry.put(key, value))
            oracle.put(key, value)
        elif op == "get":
            assert registry.get(key) == oracle.get(key)
        else:
            rev = registry.delete(key)
            existed = oracle.delete(key)
            assert (rev is not None) == existed
            if rev is not None:
                revisions.append(rev)
    return registry, oracle, revisions


def random_registry_ops(rng, n):
    ops = []
    for _ in range(n):
        op = rng.choice(("put", "put", "get", "delete"))
        key = rng.choice(REGISTRY_KEYS)
        value = f"10.244.{rng.randrange(4)}.{rng.randrange(2, 250)}".encode()
        ops.append((op, key, value))
    return ops


# -- placement -----------------------------------------------------------------


def exhaustive_feasible(nodes, pod_list):
    """Brute force over every pod->node assignment; an assignment is valid
    when every pod's selector, anti-affinity and node capacity hold."""
    for assignment in itertools.product(range(len(nodes)), repeat=len(pod_list)):
        used = {n.name: [0, 0] for n in nodes}
        per_node_sets = {n.name: set() for n in nodes}
        ok = True
        for pod_idx, node_idx in enumerate(assignment):
            set_name, request, placement = pod_list[pod_idx]
            node = nodes[node_idx]
            if not placement.node_role.matches(node.role):
                ok = False
                break
            if placement.anti_affinity and set_name in per_node_sets[node.name]:
                ok = False
                break
            used[node.name][0] += request.cpu_millicores
            used[node.name][1] += request.mem_mib
            if used[node.name][0] > node.cpu_capacity or used[node.name][1] > node.mem_capacity:
                ok = False
                break
            per_node_sets[node.name].add(set_name)
        if ok:
            return True
    return False


def sequential_schedule_all(nodes, set_specs):
    """Place every declared pod the way the kernel would (round-robin by
    ordinal across sets, lookahead demands recomputed each decision).
    Returns True when everything found a node."""
    cluster = Cluster(nodes)
    sets = {s.name: s for s in set_specs}
    pods = []
    created = {s.name: 0 for s in set_specs}
    total = sum(s.replicas for s in set_specs)
    for _ in range(total):
        progressed = False
        for spec in set_specs:
            if created[spec.name] >= spec.replicas:
                continue
            ordinal = created[spec.name]
            p = PodInstance(spec.pod_name(ordinal), spec.kind, set_name=spec.name,
                            ordinal=ordinal)
            all_pods = pods + [p]
            demands = remaining_demand(sets, all_pods, exclude_pod=p.name)
            node = schedule(p, cluster, sets, all_pods, demands)
            if node is None:
                return False
            cluster.commit(spec.requests, node.name)
            p.node = node.name
            p.phase = PodPhase.RUNNING
            pods.append(p)
            created[spec.name] += 1
            progressed = True
        if not progressed:
            break
    return sum(created.values()) == total


def random_placement_instance(rng):
    """A seeded instance: <=4 nodes, <=6 pods across 1-2 sets, with random
    capacities, requests, selectors and anti-affinity."""
    n_nodes = rng.randint(1, 4)
    nodes = [NodeSpec("m", NodeRole.MASTER, rng.choice([1000, 2000, 4000]),
                      rng.choice([1024, 4096]), default_pod_cidr(0))]
    for i in range(1, n_nodes):
        nodes.append(NodeSpec(f"w{i}", NodeRole.WORKER, rng.choice([1000, 2000, 4000]),
                              rng.choice([1024, 4096]), default_pod_cidr(i)))
    kinds = [PodKind.RRH, PodKind.BBU]
    set_specs = []
    budget = 6
    for s in range(rng.randint(1, 2)):
        replicas = rng.randint(1, min(4, budget))
        budget -= replicas
        set_specs.append(
            StatefulSetSpec(
                f"set{s}", kinds[s], replicas,
                ResourceUsage(rng.choice([200, 500, 900, 1500]), rng.choice([128, 512, 1024])),
                Placement(rng.choice(list(NodeSelector)), rng.random() < 0.5),
            )
        )
        if budget <= 0:
            break
    return nodes, set_specs
