"""Cluster model: node roles/capacities, per-node pod-CIDR address
allocation, virtual-router routing between nodes, and admission control.

Each node owns a disjoint IPv4 block for its pods. Address .1 of every
block is reserved for the node's virtual router; pod addresses are handed
out lowest-free-first, which makes allocation fully deterministic. Routing
is two-level: pods on the same node talk directly, pods on different nodes
traverse both nodes' virtual routers, giving the path [src-node, dst-node].
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field
from enum import Enum
from ipaddress import IPv4Address, IPv4Network

POD_SUPERNET = IPv4Network("10.244.0.0/16")


class ClusterError(Exception):
    pass


class IpPoolExhausted(ClusterError):
    """No free address left in a node's pod CIDR; callers should place the
    pod elsewhere."""


class NodeRole(Enum):
    MASTER = "MASTER"
    WORKER = "WORKER"


@dataclass(frozen=True)
class ResourceUsage:
    """A CPU/memory pair, used for capacities, requests and metered usage."""

    cpu_millicores: int = 0
    mem_mib: int = 0

    def __post_init__(self) -> None:
        if self.cpu_millicores < 0 or self.mem_mib < 0:
            raise ValueError("resource amounts must be >= 0")

    def __add__(self, other: "ResourceUsage") -> "ResourceUsage":
        return ResourceUsage(
            self.cpu_millicores + other.cpu_millicores, self.mem_mib + other.mem_mib
        )

    def __sub__(self, other: "ResourceUsage") -> "ResourceUsage":
        return ResourceUsage(
            self.cpu_millicores - other.cpu_millicores, self.mem_mib - other.mem_mib
        )

    def fits_within(self, capacity: "ResourceUsage") -> bool:
        return (
            self.cpu_millicores <= capacity.cpu_millicores
            and self.mem_mib <= capacity.mem_mib
        )


ZERO_USAGE = ResourceUsage(0, 0)


@dataclass(frozen=True)
class NodeSpec:
    name: str
    role: NodeRole
    cpu_capacity: int  # millicores
    mem_capacity: int  # MiB
    pod_cidr: IPv4Network

    def __post_init__(self) -> None:
        if self.cpu_capacity <= 0:
            raise ValueError(f"node {self.name}: cpu_capacity must be > 0")
        if self.mem_capacity <= 0:
            raise ValueError(f"node {self.name}: mem_capacity must be > 0")

    @property
    def capacity(self) -> ResourceUsage:
        return ResourceUsage(self.cpu_capacity, self.mem_capacity)

    @property
    def router_ip(self) -> IPv4Address:
        return self.pod_cidr.network_address + 1


@dataclass(frozen=True)
class RouteEntry:
    dst_cidr: IPv4Network
    via_node: str


def default_pod_cidr(node_index: int) -> IPv4Network:
    """/24 block carved out of the pod supernet for node number `node_index`
    (master is index 0)."""
    if not 0 <= node_index < 256:
        raise ClusterError("pod supernet holds at most 256 /24 node blocks")
    base = int(POD_SUPERNET.network_address) + (node_index << 8)
    return IPv4Network((base, 24))


class Cluster:
    """Owns node inventory, pod IP allocation and committed resource
    requests. All mutation happens on the simulation's event loop; reads of
    returned snapshots are safe anywhere."""

    def __init__(self, nodes: list[NodeSpec]):
        if sum(1 for n in nodes if n.role is NodeRole.MASTER) != 1:
            raise ClusterError("exactly one MASTER required")
        names = [n.name for n in nodes]
        if len(set(names)) != len(names):
            raise ClusterError("node names must be unique")
        for i, a in enumerate(nodes):
            for b in nodes[i + 1 :]:
                if a.pod_cidr.overlaps(b.pod_cidr):
                    raise ClusterError(
                        f"pod CIDRs of {a.name} and {b.name} overlap"
                    )
        self._nodes: dict[str, NodeSpec] = {n.name: n for n in nodes}
        self._allocated: dict[IPv4Address, str] = {}  # ip -> node name
        self._committed: dict[str, ResourceUsage] = {n.name: ZERO_USAGE for n in nodes}

    @property
    def nodes(self) -> list[NodeSpec]:
        return list(self._nodes.values())

    def node(self, name: str) -> NodeSpec:
        try:
            return self._nodes[name]
        except KeyError:
            raise ClusterError(f"unknown node {name!r}") from None

    @property
    def master(self) -> NodeSpec:
        return next(n for n in self._nodes.values() if n.role is NodeRole.MASTER)

    # -- addressing -------------------------------------------------------

    def allocate_ip(self, node_name: str) -> IPv4Address:
        """Hand out the lowest free pod address on the node.

        Network, broadcast and the .1 router address are never allocated.
        """
        node = self.node(node_name)
        for ip in node.pod_cidr.hosts():
            if ip == node.router_ip:
                continue
            if ip not in self._allocated:
                self._allocated[ip] = node_name
                return ip
        raise IpPoolExhausted(f"pod CIDR of {node_name} is exhausted")

    def release_ip(self, node_name: str, ip: IPv4Address) -> None:
        if self._allocated.get(ip) != node_name:
            raise ClusterError(f"{ip} is not allocated on {node_name}")
        del self._allocated[ip]

    def has_free_ip(self, node_name: str) -> bool:
        node = self.node(node_name)
        return any(
            ip != node.router_ip and ip not in self._allocated
            for ip in node.pod_cidr.hosts()
        )

    def node_of_ip(self, ip: IPv4Address) -> str | None:
        return self._allocated.get(ip)

    def allocated_ips(self, node_name: str | None = None) -> list[IPv4Address]:
        return sorted(
            ip
            for ip, owner in self._allocated.items()
            if node_name is None or owner == node_name
        )

    # -- routing ----------------------------------------------------------

    def routes(self, node_name: str) -> list[RouteEntry]:
        """The node's virtual-router table: one entry per peer pod CIDR."""
        self.node(node_name)
        return [
            RouteEntry(peer.pod_cidr, peer.name)
            for peer in self._nodes.values()
            if peer.name != node_name
        ]

    def route(self, src_ip: IPv4Address, dst_ip: IPv4Address) -> list[str]:
        """Node path a packet takes between two allocated pod addresses."""
        src_node = self._allocated.get(src_ip)
        dst_node = self._allocated.get(dst_ip)
        if src_node is None:
            raise ClusterError(f"{src_ip} is not an allocated pod address")
        if dst_node is None:
            raise ClusterError(f"{dst_ip} is not an allocated pod address")
        if src_node == dst_node:
            return [src_node]
        return [src_node, dst_node]

    # -- admission --------------------------------------------------------

    def committed(self, node_name: str) -> ResourceUsage:
        return self._committed[node_name]

    def admit(self, request: ResourceUsage, node_name: str) -> bool:
        """True iff the node can take `request` on top of what is already
        committed, in both CPU and memory."""
        node = self.node(node_name)
        return (self._committed[node_name] + request).fits_within(node.capacity)

    def commit(self, request: ResourceUsage, node_name: str) -> None:
        if not self.admit(request, node_name):
            raise ClusterError(f"request does not fit on {node_name}")
        self._committed[node_name] = self._committed[node_name] + request

    def uncommit(self, request: ResourceUsage, node_name: str) -> None:
        left = self._committed[node_name] - request
        self._committed[node_name] = left  # raises if it would go negative

    def committed_cpu_fraction(self, node_name: str) -> float:
        node = self.node(node_name)
        return self._committed[node_name].cpu_millicores / node.cpu_capacity
