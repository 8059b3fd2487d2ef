"""2D↔1D scan routes and the selective state-space recurrence run along them."""

import time
from dataclasses import dataclass
from enum import StrEnum
from functools import lru_cache

import numpy as np

from fluxamba.exceptions import ConfigError, DimensionError
from fluxamba.logger import get_logger
from fluxamba.numerics import flops, ops
from fluxamba.numerics.params import ParamScope, ParamStore
from fluxamba.numerics.tensor import apply_op, reshape, Tensor, transpose

logger = get_logger(__name__)

DEFAULT_STATE_SIZE = 8


class RouteKind(StrEnum):
    h_raster = "HRaster"
    v_raster = "VRaster"
    diag_main = "DiagMain"
    diag_anti = "DiagAnti"
    parallel_snake = "ParallelSnake"
    diag_snake = "DiagSnake"


class ScanStrategy(StrEnum):
    """Route combinations a block can scan with.

    Only fs2d is aggregated by the learned directional gates; the other
    strategies average their route outputs uniformly. sass approximates the
    snake templates of structure-aware scanning with one parallel and one
    diagonal snake.
    """

    fs2d = "fs2d"
    parallel = "parallel"
    diag = "diag"
    parallel_snake = "parallel_snake"
    diag_snake = "diag_snake"
    sass = "sass"


STRATEGY_ROUTES: dict[ScanStrategy, tuple[RouteKind, ...]] = {
    ScanStrategy.fs2d: (RouteKind.h_raster, RouteKind.v_raster, RouteKind.diag_main, RouteKind.diag_anti),
    ScanStrategy.parallel: (RouteKind.h_raster, RouteKind.v_raster),
    ScanStrategy.diag: (RouteKind.diag_main, RouteKind.diag_anti),
    ScanStrategy.parallel_snake: (RouteKind.parallel_snake,),
    ScanStrategy.diag_snake: (RouteKind.diag_snake,),
    ScanStrategy.sass: (RouteKind.parallel_snake, RouteKind.diag_snake),
}


@dataclass(frozen=True)
class ScanRoute:
    """Bijection between grid positions and sequence indices.

    Attributes:
        kind: The route generator.
        height: Grid height.
        width: Grid width.
        order: [L, 2] (row, col) visited at each sequence index.
        flat: [L] row-major grid index visited at each sequence index.
        inverse: [L] sequence index of each row-major grid index.
    """

    kind: RouteKind
    height: int
    width: int
    order: np.ndarray
    flat: np.ndarray
    inverse: np.ndarray

    @property
    def length(self) -> int:
        return self.height * self.width


def _raster_rows(height: int, width: int, snake: bool) -> list[tuple[int, int]]:
    cells = []
    for i in range(height):
        cols = range(width) if not (snake and i % 2) else range(width - 1, -1, -1)
        cells.extend((i, j) for j in cols)
    return cells


def _anti_diagonals(height: int, width: int, snake: bool) -> list[tuple[int, int]]:
    # i + j constant, rows increasing
    cells = []
    for s in range(height + width - 1):
        rows = range(max(0, s - width + 1), min(height - 1, s) + 1)
        if snake and s % 2:
            rows = reversed(rows)
        cells.extend((i, s - i) for i in rows)
    return cells


def _main_diagonals(height: int, width: int) -> list[tuple[int, int]]:
    # j − i constant from −(H−1) to W−1, rows increasing
    cells = []
    for d in range(-(height - 1), width):
        rows = range(max(0, -d), min(height - 1, width - 1 - d) + 1)
        cells.extend((i, i + d) for i in rows)
    return cells


@lru_cache(maxsize=256)
def make_route(kind: RouteKind | str, height: int, width: int) -> ScanRoute:
    """Build the route of a given kind on an H×W grid.

    HRaster is row-major, VRaster column-major. DiagMain walks the anti-diagonals
    i + j = 0..H+W−2 and DiagAnti the diagonals j − i = −(H−1)..W−1, both by
    increasing row inside a diagonal. ParallelSnake reverses odd rows and
    DiagSnake reverses odd anti-diagonals.

    Raises:
        DimensionError: If the grid is empty.
    """
    kind = RouteKind(kind)
    if height < 1 or width < 1:
        raise DimensionError(f"route grid must be non-empty, got {height}×{width}")
    if kind == RouteKind.h_raster:
        cells = _raster_rows(height, width, snake=False)
    elif kind == RouteKind.v_raster:
        cells = [(i, j) for j in range(width) for i in range(height)]
    elif kind == RouteKind.diag_main:
        cells = _anti_diagonals(height, width, snake=False)
    elif kind == RouteKind.diag_anti:
        cells = _main_diagonals(height, width)
    elif kind == RouteKind.parallel_snake:
        cells = _raster_rows(height, width, snake=True)
    else:
        cells = _anti_diagonals(height, width, snake=True)

    order = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
    flat = order[:, 0] * width + order[:, 1]
    inverse = np.empty_like(flat)
    inverse[flat] = np.arange(flat.size)
    for arr in (order, flat, inverse):
        arr.setflags(write=False)
    return ScanRoute(kind, height, width, order, flat, inverse)


def serialize(x: Tensor, route: ScanRoute) -> Tensor:
    """[B, C, H, W] → [B, C, L] in route order."""
    if x.ndim != 4 or x.shape[2:] != (route.height, route.width):
        raise DimensionError(f"feature map {x.shape} does not match a {route.height}×{route.width} route")
    batch, channels = x.shape[:2]
    return ops.permute_last(reshape(x, (batch, channels, route.length)), route.flat)


def deserialize(seq: Tensor, route: ScanRoute, height: int, width: int) -> Tensor:
    """[B, C, L] in route order → [B, C, H, W]."""
    if (height, width) != (route.height, route.width) or seq.ndim != 3 or seq.shape[2] != route.length:
        raise DimensionError(f"sequence {seq.shape} does not match a {route.height}×{route.width} route")
    batch, channels = seq.shape[:2]
    return reshape(ops.permute_last(seq, route.inverse), (batch, channels, height, width))


@dataclass
class SsmParams:
    """Diagonal selective state-space parameters for C channels and N states.

    Attributes:
        a_log: [C, N]; the decay is A = −exp(a_log) < 0.
        d: [C] skip weights.
        w_delta: [C, C] step-size projection.
        b_delta: [C] step-size bias.
        w_b: [N, C] input projection.
        w_c: [N, C] readout projection.
    """

    a_log: Tensor
    d: Tensor
    w_delta: Tensor
    b_delta: Tensor
    w_b: Tensor
    w_c: Tensor

    @classmethod
    def create(cls, scope: ParamScope, channels: int, state_size: int = DEFAULT_STATE_SIZE) -> "SsmParams":
        # A log-spaced in [−1, −1/16]
        a_log = np.tile(np.linspace(np.log(1.0 / 16.0), 0.0, state_size), (channels, 1))
        return cls(
            a_log=scope.value("a_log", a_log),
            d=scope.ones("d", (channels,)),
            w_delta=scope.kaiming("w_delta", (channels, channels), channels),
            b_delta=scope.zeros("b_delta", (channels,)),
            w_b=scope.kaiming("w_b", (state_size, channels), channels),
            w_c=scope.kaiming("w_c", (state_size, channels), channels),
        )

    @property
    def state_size(self) -> int:
        return self.a_log.shape[1]


def _recurrence(u: Tensor, delta: Tensor, a: Tensor, b: Tensor, c: Tensor, d: Tensor) -> Tensor:
    """Fused diagonal scan over [B, L, C] inputs with [B, L, N] input/readout projections."""
    batch, length, channels = u.shape
    decay = np.exp(delta.data[..., None] * a.data)
    drive = delta.data[..., None] * b.data[:, :, None, :] * u.data[..., None]
    states = np.empty_like(decay)
    h = np.zeros((batch, channels, a.shape[1]), dtype=u.data.dtype)
    for t in range(length):
        h = decay[:, t] * h + drive[:, t]
        states[:, t] = h
    out = np.einsum("blcn,bln->blc", states, c.data) + d.data * u.data
    flops.report("scan", batch * flops.scan_flops(length, channels, a.shape[1]))

    def rule(g):
        grad_c = np.einsum("blc,blcn->bln", g, states)
        grad_state_out = g[..., None] * c.data[:, :, None, :]
        grad_decay = np.empty_like(decay)
        grad_drive = np.empty_like(drive)
        carry = np.zeros_like(h)
        for t in range(length - 1, -1, -1):
            carry = carry + grad_state_out[:, t]
            grad_drive[:, t] = carry
            grad_decay[:, t] = carry * states[:, t - 1] if t > 0 else 0.0
            carry = carry * decay[:, t]
        decay_term = grad_decay * decay
        input_term = (grad_drive * b.data[:, :, None, :]).sum(axis=-1)
        grad_delta = (decay_term * a.data).sum(axis=-1) + input_term * u.data
        grad_a = (decay_term * delta.data[..., None]).sum(axis=(0, 1))
        grad_b = np.einsum("blcn,blc->bln", grad_drive, delta.data * u.data)
        grad_u = g * d.data + input_term * delta.data
        grad_d = (g * u.data).sum(axis=(0, 1))
        return grad_u, grad_delta, grad_a, grad_b, grad_c, grad_d

    return apply_op("selective_scan", (u, delta, a, b, c, d), out, rule)


def selective_scan(seq: Tensor, p: SsmParams) -> Tensor:
    """Input-dependent diagonal state-space scan of [B, C, L] sequences.

    Per time step t: Δ = softplus(W_Δ·x_t + b_Δ), Ā = exp(Δ·A), B̄ = Δ·(W_B·x_t),
    h_t = Ā⊙h_{t−1} + B̄·x_t with h_0 = 0, and y_t = (W_C·x_t)·h_t + D·x_t.
    O(L·N) work per channel.
    """
    if seq.ndim != 3 or seq.shape[1] != p.d.shape[0]:
        raise DimensionError(f"sequence {seq.shape} does not match {p.d.shape[0]} scan channels on axis 1")
    u = transpose(seq, (0, 2, 1))
    delta = ops.softplus(ops.linear(u, p.w_delta, p.b_delta))
    b = ops.linear(u, p.w_b)
    c = ops.linear(u, p.w_c)
    a = -ops.exp(p.a_log)
    return transpose(_recurrence(u, delta, a, b, c, p.d), (0, 2, 1))


@dataclass
class DirectionalSequences:
    """Scanned outputs of one feature map along several routes.

    Attributes:
        routes: The routes, one per direction.
        sequences: Scanned [B, C, L] sequences in each route's order.
        maps: The same outputs deserialized to [B, C, H, W].
    """

    routes: list[ScanRoute]
    sequences: list[Tensor]
    maps: list[Tensor]


def scan_routes(x: Tensor, params: list[SsmParams], kinds: tuple[RouteKind, ...]) -> DirectionalSequences:
    """serialize → selective_scan → deserialize along each route with its own parameters."""
    if len(params) != len(kinds):
        raise ConfigError(f"{len(kinds)} routes need {len(kinds)} scan parameter sets, got {len(params)}")
    height, width = x.shape[2:]
    routes = [make_route(kind, height, width) for kind in kinds]
    sequences = [selective_scan(serialize(x, route), p) for route, p in zip(routes, params, strict=True)]
    maps = [deserialize(seq, route, height, width) for seq, route in zip(sequences, routes, strict=True)]
    return DirectionalSequences(routes, sequences, maps)


def fs2d(x: Tensor, params: list[SsmParams]) -> DirectionalSequences:
    """Four-directional scan along HRaster, VRaster, DiagMain and DiagAnti."""
    return scan_routes(x, params, STRATEGY_ROUTES[ScanStrategy.fs2d])


@dataclass(frozen=True)
class ScanProfile:
    """Wall time of selective_scan per sequence length with a least-squares line t = a·L + b."""

    points: list[tuple[int, float]]
    slope: float
    intercept: float
    r_squared: float


def scan_time_profile(
    lengths: list[int],
    channels: int = 8,
    state_size: int = DEFAULT_STATE_SIZE,
    repeat: int = 3,
    seed: int = 42,
) -> ScanProfile:
    """Time selective_scan on random unit-scale sequences and fit a line through the medians."""
    params = SsmParams.create(ParamStore(seed).scope("profile"), channels, state_size)
    rng = np.random.default_rng(seed)
    points = []
    for length in lengths:
        seq = Tensor(rng.standard_normal((1, channels, length)))
        timings = []
        for _ in range(max(repeat, 1)):
            start_time = time.perf_counter()
            selective_scan(seq, params)
            timings.append(time.perf_counter() - start_time)
        points.append((int(length), float(np.median(timings))))
        logger.debug("scan timed", extra={"length": length, "duration": f"{points[-1][1]:.4f}s"})

    xs = np.array([p[0] for p in points], dtype=np.float64)
    ys = np.array([p[1] for p in points], dtype=np.float64)
    slope, intercept = np.polyfit(xs, ys, 1) if len(points) > 1 else (ys[0] / xs[0], 0.0)
    residual = ys - (slope * xs + intercept)
    total = ((ys - ys.mean()) ** 2).sum()
    r_squared = 1.0 - float((residual**2).sum() / total) if total > 0 else 1.0
    return ScanProfile(points, float(slope), float(intercept), r_squared)
