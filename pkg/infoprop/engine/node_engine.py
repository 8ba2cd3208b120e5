"""Node flow allocation.

Routes are represented locally by their remaining path, so a route on an
upstream link is the tuple of links still ahead of the vehicles, starting with
that link. Routes that share the rest of their path merge automatically and the
route transition matrix is a plain suffix shift. Origins contribute a virtual
source row and destinations a virtual sink column with unbounded capacity.
"""

import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np

from infoprop.exceptions import ConfigurationError
from infoprop.models.packages import RouteKey

logger = logging.getLogger(__name__)

SOURCE = "@source"
SINK = "@sink"
FLOW_TOLERANCE = 1e-9
STOCHASTIC_TOLERANCE = 1e-9
MAX_ALLOCATION_PASSES = 10_000


def route_image(route: RouteKey) -> RouteKey:
    """Local route on the downstream side of the node"""
    return route[1:] if len(route) > 1 else (SINK,)


@dataclass(frozen=True)
class NodeTopology:
    """Incidence, transition and priority matrices of one node; built once per route set"""

    node_id: str
    upstream_links: tuple[str, ...]
    downstream_links: tuple[str, ...]
    upstream_routes: tuple[RouteKey, ...]
    downstream_routes: tuple[RouteKey, ...]
    A_IR: np.ndarray = field(repr=False)
    A_JS: np.ndarray = field(repr=False)
    T: np.ndarray = field(repr=False)
    W: np.ndarray = field(repr=False)

    def __post_init__(self):
        n_i, n_j = len(self.upstream_links), len(self.downstream_links)
        n_r, n_s = len(self.upstream_routes), len(self.downstream_routes)
        expected = {
            "A_IR": (self.A_IR, (n_i, n_r)),
            "A_JS": (self.A_JS, (n_j, n_s)),
            "T": (self.T, (n_r, n_s)),
            "W": (self.W, (n_i, n_j)),
        }
        for name, (matrix, shape) in expected.items():
            if matrix.shape != shape:
                raise ConfigurationError(
                    f"Node {self.node_id}: {name} has shape {matrix.shape}, expected {shape}"
                )
        if n_r and not np.all(self.A_IR.sum(axis=0) == 1):
            raise ConfigurationError(f"Node {self.node_id}: every route needs one upstream link")
        if n_s and not np.all(self.A_JS.sum(axis=0) == 1):
            raise ConfigurationError(f"Node {self.node_id}: every route needs one downstream link")
        turns = self.turns
        if np.any(turns & (self.W <= 0)):
            raise ConfigurationError(
                f"Node {self.node_id}: priority must be positive on every turn"
            )
        sums = self.W.sum(axis=0)
        for j, link in enumerate(self.downstream_links):
            if turns[:, j].any() and abs(sums[j] - 1.0) > STOCHASTIC_TOLERANCE:
                raise ConfigurationError(
                    f"Node {self.node_id}: priority column {link} sums to {sums[j]}, expected 1"
                )

    @property
    def turns(self) -> np.ndarray:
        """I x J boolean matrix of movements used by at least one route"""
        return (self.A_IR @ self.T @ self.A_JS.T) > 0

    def with_priorities(self, W: np.ndarray) -> "NodeTopology":
        return NodeTopology(
            self.node_id,
            self.upstream_links,
            self.downstream_links,
            self.upstream_routes,
            self.downstream_routes,
            self.A_IR,
            self.A_JS,
            self.T,
            normalize_columns(W),
        )

    def routes_on(self, link: str, downstream: bool = False) -> list[int]:
        routes = self.downstream_routes if downstream else self.upstream_routes
        return [i for i, r in enumerate(routes) if r[0] == link]


@dataclass(frozen=True)
class NodeFlowSnapshot:
    """Upstream demands, route proportions and downstream capacities at one instant"""

    D_I: np.ndarray
    P_R: np.ndarray
    C_J: np.ndarray

    def validate(self, topo: NodeTopology) -> None:
        if self.D_I.shape != (len(topo.upstream_links),):
            raise ConfigurationError(f"Node {topo.node_id}: D_I has shape {self.D_I.shape}")
        if self.P_R.shape != (len(topo.upstream_routes),):
            raise ConfigurationError(f"Node {topo.node_id}: P_R has shape {self.P_R.shape}")
        if self.C_J.shape != (len(topo.downstream_links),):
            raise ConfigurationError(f"Node {topo.node_id}: C_J has shape {self.C_J.shape}")
        if np.any(self.D_I < -FLOW_TOLERANCE) or np.any(self.C_J < -FLOW_TOLERANCE):
            raise ConfigurationError(f"Node {topo.node_id}: negative demand or capacity")
        per_link = topo.A_IR @ self.P_R
        for i, total in enumerate(per_link):
            if total > STOCHASTIC_TOLERANCE and abs(total - 1.0) > STOCHASTIC_TOLERANCE:
                raise ConfigurationError(
                    f"Node {topo.node_id}: route proportions on {topo.upstream_links[i]} "
                    f"sum to {total}"
                )


def normalize_columns(W: np.ndarray) -> np.ndarray:
    sums = W.sum(axis=0)
    return np.divide(W, sums, out=np.zeros_like(W, dtype=float), where=sums > 0)


def build_topology(
    node_id: str,
    upstream_links: Iterable[str],
    downstream_links: Iterable[str],
    routes: Iterable[tuple[str, ...]],
    *,
    origin: bool = False,
    destination: bool = False,
    priorities: Mapping[str, Mapping[str, float]] | None = None,
    capacity_weights: Mapping[str, float] | None = None,
) -> NodeTopology:
    """Build A_IR, A_JS, T and W for a node from the full paths of all routes.

    Without explicit priorities, W is proportional to the capacity weight of
    each feeder over the turns it uses, with each column normalised.
    """
    ups = sorted(set(upstream_links))
    downs = sorted(set(downstream_links))
    if origin:
        ups.append(SOURCE)
    if destination:
        downs.append(SINK)
    up_index = {link: i for i, link in enumerate(ups)}
    down_index = {link: j for j, link in enumerate(downs)}

    local: set[RouteKey] = set()
    for path in routes:
        path = tuple(path)
        if origin and path and path[0] in down_index:
            local.add((SOURCE, *path))
        for p, link in enumerate(path):
            if link not in up_index:
                continue
            suffix = path[p:]
            image = route_image(suffix)
            if image[0] not in down_index:
                raise ConfigurationError(
                    f"Node {node_id}: route {path} leaves {link} to unknown link {image[0]}"
                )
            local.add(suffix)

    upstream_routes = tuple(sorted(local))
    downstream_routes = tuple(sorted({route_image(r) for r in upstream_routes}))
    s_index = {s: k for k, s in enumerate(downstream_routes)}

    A_IR = np.zeros((len(ups), len(upstream_routes)))
    T = np.zeros((len(upstream_routes), len(downstream_routes)))
    for r, route in enumerate(upstream_routes):
        A_IR[up_index[route[0]], r] = 1.0
        T[r, s_index[route_image(route)]] = 1.0
    A_JS = np.zeros((len(downs), len(downstream_routes)))
    for s, route in enumerate(downstream_routes):
        A_JS[down_index[route[0]], s] = 1.0

    turns = (A_IR @ T @ A_JS.T) > 0
    W = np.zeros((len(ups), len(downs)))
    weights = dict(capacity_weights or {})
    for i, up in enumerate(ups):
        for j, down in enumerate(downs):
            if not turns[i, j]:
                continue
            if priorities is not None:
                try:
                    W[i, j] = float(priorities[up][down])
                except KeyError as e:
                    raise ConfigurationError(
                        f"Node {node_id}: no priority given for turn {up} -> {down}"
                    ) from e
            elif up == SOURCE:
                W[i, j] = weights.get(down, 1.0)
            else:
                W[i, j] = weights.get(up, 1.0)

    return NodeTopology(
        node_id,
        tuple(ups),
        tuple(downs),
        upstream_routes,
        downstream_routes,
        A_IR,
        A_JS,
        T,
        normalize_columns(W),
    )


def turn_proportions(topo: NodeTopology, P_R: np.ndarray) -> np.ndarray:
    """Share of each upstream link's flow bound for each downstream link"""
    return (topo.A_IR * P_R[None, :]) @ topo.T @ topo.A_JS.T


def unconstrained_downstream_flows(
    topo: NodeTopology, F_I: np.ndarray, P_R: np.ndarray
) -> np.ndarray:
    F_I, P_R = np.asarray(F_I, dtype=float), np.asarray(P_R, dtype=float)
    if F_I.shape != (len(topo.upstream_links),) or P_R.shape != (len(topo.upstream_routes),):
        raise ConfigurationError(
            f"Node {topo.node_id}: F_I {F_I.shape} / P_R {P_R.shape} do not match the topology"
        )
    F_R = P_R * (topo.A_IR.T @ F_I)
    return topo.A_JS @ (topo.T.T @ F_R)


def allocate_flows(topo: NodeTopology, snap: NodeFlowSnapshot) -> np.ndarray:
    """Turn flows that respect downstream capacities and priorities.

    Each pass gives every active feeder its priority share of the remaining
    capacity, scaled by the active feeders' weights, and lets it send the
    largest fraction of its remaining demand that fits all of its turns. A
    feeder leaves the active set once its demand is served or once any
    downstream link it still needs is full. Turn proportions of each feeder
    are therefore preserved. When feeders are held by different links the
    passes converge geometrically, so their number is not bounded by the
    turn count; they stop once no feeder moves more than the flow tolerance,
    or with a warning after MAX_ALLOCATION_PASSES.
    """
    snap.validate(topo)
    n_i, n_j = len(topo.upstream_links), len(topo.downstream_links)
    D_IJ = snap.D_I[:, None] * turn_proportions(topo, snap.P_R)
    remaining = D_IJ.copy()
    capacity = snap.C_J.astype(float).copy()
    flows = np.zeros((n_i, n_j))
    active = remaining.sum(axis=1) > FLOW_TOLERANCE

    for _ in range(MAX_ALLOCATION_PASSES):
        if not active.any():
            break
        weights = normalize_columns(np.where(active[:, None], topo.W, 0.0))
        with np.errstate(invalid="ignore"):
            share = np.where(weights > 0, weights * capacity[None, :], 0.0)
        needs = active[:, None] & (remaining > FLOW_TOLERANCE)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(needs, share / np.where(needs, remaining, 1.0), np.inf)
        alpha = np.where(active, np.minimum(ratio.min(axis=1), 1.0), 0.0)

        step = alpha[:, None] * remaining
        flows += step
        remaining -= step
        capacity = np.maximum(capacity - step.sum(axis=0), 0.0)

        served = remaining.sum(axis=1) <= FLOW_TOLERANCE
        full = capacity <= FLOW_TOLERANCE
        blocked = ((remaining > FLOW_TOLERANCE) & full[None, :]).any(axis=1)
        still_active = active & ~served & ~blocked
        if step.max(initial=0.0) <= FLOW_TOLERANCE and np.array_equal(still_active, active):
            logger.debug(f"Node {topo.node_id}: allocation stalled, stopping")
            break
        active = still_active
    else:
        if active.any():
            logger.warning(
                f"Node {topo.node_id}: allocation still moving after {MAX_ALLOCATION_PASSES} passes"
            )
    return flows


def aggregate_flows(F_IJ: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return F_IJ.sum(axis=1), F_IJ.sum(axis=0)


def downstream_route_state(
    topo: NodeTopology,
    F_I: np.ndarray,
    P_R: np.ndarray,
    previous: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Route flows on the downstream side and their proportions per downstream link.

    Where a downstream link receives no flow its proportions keep their
    previous values.
    """
    F_R = P_R * (topo.A_IR.T @ F_I)
    F_S = topo.T.T @ F_R
    totals = topo.A_JS @ F_S
    per_route_total = topo.A_JS.T @ totals
    P_S = np.zeros(len(topo.downstream_routes)) if previous is None else previous.astype(float)
    flowing = per_route_total > FLOW_TOLERANCE
    shares = np.divide(F_S, per_route_total, where=flowing, out=np.zeros_like(F_S))
    P_S = np.where(flowing, shares, P_S)
    return F_S, P_S
