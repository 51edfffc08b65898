"""Adaptive Metropolis-within-Gibbs engine.

A posterior is described as a :class:`BlockModel`: named parameter
blocks plus log-density factors with explicit dependencies.  The sampler
updates one block at a time with Gaussian random-walk proposals on
unconstrained scales (log / logit / arctanh, with Jacobian corrections),
recomputing only the factors that touch the updated block.  Per-study
parameter vectors whose posterior factorizes across studies are declared
as "sites" blocks and updated with vectorized independent
accept/reject decisions, one per site.

Step sizes adapt during burn-in toward 0.44 acceptance for scalar
updates and 0.23 for joint vector proposals, and are frozen afterwards.
Each chain draws from its own counter-based substream keyed by
``(seed, chain index)``, so results are reproducible and independent of
any parallel schedule.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._rng import substream
from .errors import DomainError, InitFailure, NonFiniteDensity
from .posterior import PosteriorSummary, summarize

TARGET_SCALAR = 0.44
TARGET_JOINT = 0.23


# ---------------------------------------------------------------------------
# transforms between constrained and unconstrained scales
# ---------------------------------------------------------------------------


class IdentityTransform:
    def forward(self, x):
        return np.asarray(x, dtype=float)

    def inverse(self, z):
        return np.asarray(z, dtype=float)

    def log_jacobian(self, z):
        return np.zeros_like(np.asarray(z, dtype=float))


class LogTransform:
    """Positive parameters: x = exp(z)."""

    def forward(self, x):
        return np.log(x)

    def inverse(self, z):
        return np.exp(z)

    def log_jacobian(self, z):
        return np.asarray(z, dtype=float)


class IntervalTransform:
    """Bounded parameters: logit scale on (lo, hi)."""

    def __init__(self, lo=0.0, hi=1.0):
        self.lo = float(lo)
        self.hi = float(hi)
        self._log_width = math.log(self.hi - self.lo)

    def forward(self, x):
        u = (np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo)
        return np.log(u) - np.log1p(-u)

    def inverse(self, z):
        z = np.asarray(z, dtype=float)
        return self.lo + (self.hi - self.lo) / (1.0 + np.exp(-z))

    def log_jacobian(self, z):
        z = np.asarray(z, dtype=float)
        return self._log_width - np.logaddexp(0.0, z) - np.logaddexp(0.0, -z)


class FisherZTransform:
    """Correlations: x = tanh(z) on (-1, 1)."""

    def forward(self, x):
        return np.arctanh(np.asarray(x, dtype=float))

    def inverse(self, z):
        return np.tanh(np.asarray(z, dtype=float))

    def log_jacobian(self, z):
        z = np.asarray(z, dtype=float)
        return math.log(4.0) - 2.0 * np.logaddexp(z, -z)


IDENTITY = IdentityTransform()
LOG = LogTransform()
UNIT_INTERVAL = IntervalTransform(0.0, 1.0)
FISHER_Z = FisherZTransform()


# ---------------------------------------------------------------------------
# model description
# ---------------------------------------------------------------------------


@dataclass
class Block:
    """One parameter block.

    ``kind`` is ``"scalar"`` (a single float), ``"joint"`` (a vector
    proposed as one move) or ``"sites"`` (leading axis indexes
    conditionally independent sites, each accepted separately).  For
    sites blocks an optional boolean ``free`` mask marks which sites are
    sampled; the rest stay at their initial values.
    """

    name: str
    kind: str = "scalar"
    shape: tuple = ()
    transform: object = IDENTITY
    init: object = None
    free: np.ndarray | None = None
    traced: bool = True
    trace_names: list[str] | None = None
    init_step: float = 0.25

    def initial_value(self, rng):
        value = self.init(rng) if callable(self.init) else self.init
        if self.kind == "scalar":
            return float(value)
        arr = np.array(value, dtype=float)
        if arr.shape != self.shape:
            raise DomainError(
                f"block {self.name!r}: init shape {arr.shape} != {self.shape}"
            )
        return arr

    def site_count(self):
        return self.shape[0] if self.kind == "sites" else None

    def free_mask(self):
        if self.kind != "sites":
            return None
        if self.free is None:
            return np.ones(self.shape[0], dtype=bool)
        return np.asarray(self.free, dtype=bool)

    def target_rate(self):
        if self.kind == "scalar":
            return TARGET_SCALAR
        if self.kind == "joint":
            return TARGET_JOINT if int(np.prod(self.shape)) > 1 else TARGET_SCALAR
        return TARGET_SCALAR if len(self.shape) == 1 else TARGET_JOINT

    def default_trace_names(self):
        if self.kind == "scalar":
            return [self.name]
        if self.kind == "joint":
            return [f"{self.name}[{i}]" for i in range(self.shape[0])]
        names = []
        width = 1 if len(self.shape) == 1 else int(np.prod(self.shape[1:]))
        for s in range(self.shape[0]):
            if not self.free_mask()[s]:
                continue
            if width == 1:
                names.append(f"{self.name}[{s}]")
            else:
                names.extend(f"{self.name}[{s}][{j}]" for j in range(width))
        return names


@dataclass
class Factor:
    """One additive log-density term.

    ``fn(state)`` returns a float or an array; arrays aligned with the
    sites of the blocks named in ``site_blocks`` decompose the factor
    per site.  ``bound`` maps a sites-block name to the single site
    index this factor touches (used for per-study terms that read one
    row of a shared block).
    """

    name: str
    fn: object
    deps: tuple
    site_blocks: tuple = ()
    bound: dict = field(default_factory=dict)
    role: str = "likelihood"


def _total(value):
    return float(np.sum(value))


class BlockModel:
    """Blocks plus factors; also usable as a plain log-density callable
    over the flattened vector of free constrained parameters."""

    def __init__(self, blocks, factors, name="model"):
        self.name = name
        self.blocks = list(blocks)
        self.factors = list(factors)
        self._block_by_name = {b.name: b for b in self.blocks}
        if len(self._block_by_name) != len(self.blocks):
            raise DomainError("duplicate block names")
        for f in self.factors:
            for dep in f.deps:
                if dep not in self._block_by_name:
                    raise DomainError(f"factor {f.name!r} depends on unknown {dep!r}")
            for sb in f.site_blocks:
                if self._block_by_name[sb].kind != "sites":
                    raise DomainError(
                        f"factor {f.name!r}: {sb!r} is not a sites block"
                    )
        # factor index per block
        self._affecting = {b.name: [] for b in self.blocks}
        for f in self.factors:
            for dep in f.deps:
                self._affecting[dep].append(f)
        for b in self.blocks:
            if b.kind != "sites":
                continue
            for f in self._affecting[b.name]:
                if b.name not in f.site_blocks and b.name not in f.bound:
                    raise DomainError(
                        f"factor {f.name!r} depends on sites block {b.name!r} "
                        "without site alignment or binding"
                    )

    def block(self, name):
        return self._block_by_name[name]

    def initial_state(self, rng):
        return {b.name: b.initial_value(rng) for b in self.blocks}

    def log_density(self, state) -> float:
        """Joint log density (constrained scale) at a full state dict."""
        return float(sum(_total(f.fn(state)) for f in self.factors))

    # -- flat-vector view over free constrained entries ------------------

    def _vector_layout(self):
        layout = []
        for b in self.blocks:
            if b.kind == "scalar":
                layout.append((b, 1))
            elif b.kind == "joint":
                layout.append((b, int(np.prod(b.shape))))
            else:
                width = 1 if len(b.shape) == 1 else int(np.prod(b.shape[1:]))
                layout.append((b, int(b.free_mask().sum()) * width))
        return layout

    @property
    def vector_size(self):
        return sum(n for _, n in self._vector_layout())

    def state_to_vector(self, state):
        parts = []
        for b, _ in self._vector_layout():
            v = state[b.name]
            if b.kind == "scalar":
                parts.append(np.array([v], dtype=float))
            elif b.kind == "joint":
                parts.append(np.asarray(v, dtype=float).ravel())
            else:
                arr = np.asarray(v, dtype=float)
                parts.append(arr[b.free_mask()].ravel())
        return np.concatenate(parts) if parts else np.empty(0)

    def vector_to_state(self, vec, template=None):
        vec = np.asarray(vec, dtype=float)
        state = {}
        pos = 0
        for b, n in self._vector_layout():
            chunk = vec[pos : pos + n]
            pos += n
            if b.kind == "scalar":
                state[b.name] = float(chunk[0])
            elif b.kind == "joint":
                state[b.name] = chunk.reshape(b.shape).copy()
            else:
                base = (
                    np.array(template[b.name], dtype=float)
                    if template is not None
                    else np.zeros(b.shape)
                )
                mask = b.free_mask()
                width = 1 if len(b.shape) == 1 else int(np.prod(b.shape[1:]))
                base[mask] = chunk.reshape(int(mask.sum()), width).reshape(
                    base[mask].shape
                )
                state[b.name] = base
        if pos != vec.size:
            raise DomainError(f"vector has {vec.size} entries, expected {pos}")
        return state

    def __call__(self, vec, template=None):
        return self.log_density(self.vector_to_state(vec, template=template))

    def trace_names(self):
        names = []
        for b in self.blocks:
            if b.traced:
                names.extend(b.trace_names or b.default_trace_names())
        return names


def callable_model(log_posterior, dim, init, name="callable", init_step=0.25):
    """Wrap a plain vector log-density into a one-block model."""
    kind = "scalar" if dim == 1 else "joint"

    def fn(state):
        v = state["params"]
        vec = np.atleast_1d(np.asarray(v, dtype=float))
        return log_posterior(vec if dim > 1 else vec[:1]) if dim > 1 else log_posterior(
            np.array([v], dtype=float)
        )

    block = Block(
        name="params",
        kind=kind,
        shape=() if dim == 1 else (dim,),
        init=init,
        init_step=init_step,
    )
    factor = Factor(name="target", fn=fn, deps=("params",))
    return BlockModel([block], [factor], name=name)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class McmcConfig:
    """Sampler protocol: 3 chains of 100,000 iterations with thinning of
    10 and the first half discarded, unless overridden."""

    chains: int = 3
    iterations: int = 100_000
    thin: int = 10
    burn_in: int | None = None
    seed: int = 0
    adapt_window: int = 50
    threads: int = 1

    def __post_init__(self):
        if self.chains < 1 or self.iterations < 1 or self.thin < 1:
            raise DomainError("chains, iterations and thin must be positive")
        if self.adapt_window < 1:
            raise DomainError("adapt_window must be positive")
        if self.resolved_burn_in >= self.iterations:
            raise DomainError("burn_in must be smaller than iterations")
        if (self.iterations - self.resolved_burn_in) % self.thin != 0:
            raise DomainError(
                "thin must divide the retained draw count "
                f"({self.iterations} - {self.resolved_burn_in})"
            )

    @property
    def resolved_burn_in(self) -> int:
        return self.iterations // 2 if self.burn_in is None else self.burn_in

    @property
    def kept_per_chain(self) -> int:
        return (self.iterations - self.resolved_burn_in) // self.thin

    def to_json_dict(self):
        return {
            "chains": self.chains,
            "iterations": self.iterations,
            "thin": self.thin,
            "burn_in": self.resolved_burn_in,
            "seed": self.seed,
            "adapt_window": self.adapt_window,
            "threads": self.threads,
        }


# ---------------------------------------------------------------------------
# the sampler
# ---------------------------------------------------------------------------

_MAX_INIT_TRIES = 100


class _ChainState:
    __slots__ = ("state", "z", "cache", "steps", "acc", "tries", "windows")

    def __init__(self):
        self.state = {}
        self.z = {}
        self.cache = {}
        self.steps = {}
        self.acc = {}
        self.tries = {}
        self.windows = {}


def _eval_factor(f, state):
    val = f.fn(state)
    arr = np.asarray(val, dtype=float)
    if np.isnan(arr).any():
        raise NonFiniteDensity(f"factor {f.name!r} evaluated to NaN")
    return float(arr) if arr.ndim == 0 else arr


def _run_single_chain(model, config, chain_index, record_callback=None):
    rng = substream(config.seed, "chain", chain_index)
    cs = _ChainState()

    for attempt in range(_MAX_INIT_TRIES):
        state = model.initial_state(rng)
        cache = {}
        finite = True
        for f in model.factors:
            v = _eval_factor(f, state)
            cache[f.name] = v
            if not np.all(np.isfinite(np.asarray(v))):
                finite = False
                break
        if finite:
            cs.state = state
            cs.cache = cache
            break
    else:
        raise InitFailure(
            f"no finite-density start found in {_MAX_INIT_TRIES} attempts"
        )

    blocks = model.blocks
    sampled = []
    for b in blocks:
        if b.kind == "sites":
            mask = b.free_mask()
            if not mask.any():
                continue
            cs.steps[b.name] = np.full(b.shape[0], b.init_step)
            cs.acc[b.name] = np.zeros(b.shape[0])
            cs.tries[b.name] = 0
            safe = np.array(cs.state[b.name], dtype=float)
            z = np.zeros_like(safe)
            z[mask] = np.asarray(b.transform.forward(safe[mask]))
            cs.z[b.name] = z
        else:
            cs.steps[b.name] = b.init_step
            cs.acc[b.name] = 0.0
            cs.tries[b.name] = 0
            cs.z[b.name] = np.asarray(
                b.transform.forward(cs.state[b.name]), dtype=float
            )
        cs.windows[b.name] = 0
        sampled.append(b)

    aligned = {
        b.name: [f for f in model.factors if b.name in f.site_blocks] for b in blocks
    }
    bound = {
        b.name: [(f, f.bound[b.name]) for f in model.factors if b.name in f.bound]
        for b in blocks
    }
    affecting = model._affecting

    burn_in = config.resolved_burn_in
    thin = config.thin
    kept = config.kept_per_chain
    names = model.trace_names()
    draws = np.empty((kept, len(names)))
    keep_row = 0

    traced_blocks = [b for b in blocks if b.traced]

    def record():
        nonlocal keep_row
        pos = 0
        row = draws[keep_row]
        for b in traced_blocks:
            v = cs.state[b.name]
            if b.kind == "scalar":
                row[pos] = v
                pos += 1
            elif b.kind == "joint":
                flat = np.asarray(v).ravel()
                row[pos : pos + flat.size] = flat
                pos += flat.size
            else:
                sub = np.asarray(v)[b.free_mask()].ravel()
                row[pos : pos + sub.size] = sub
                pos += sub.size
        keep_row += 1

    log = math.log

    for it in range(config.iterations):
        adapting = it < burn_in
        for b in sampled:
            name = b.name
            if b.kind == "sites":
                mask = b.free_mask()
                cur = cs.state[name]
                z_cur = cs.z[name]
                step = cs.steps[name]
                eps = rng.standard_normal(z_cur.shape)
                if z_cur.ndim == 1:
                    z_prop = z_cur + step * eps
                else:
                    z_prop = z_cur + step.reshape((-1,) + (1,) * (z_cur.ndim - 1)) * eps
                x_prop = np.asarray(b.transform.inverse(z_prop), dtype=float)
                wide_mask = mask if cur.ndim == 1 else mask.reshape(
                    (-1,) + (1,) * (cur.ndim - 1)
                )
                x_prop = np.where(wide_mask, x_prop, cur)
                lj_cur = np.asarray(b.transform.log_jacobian(z_cur))
                lj_prop = np.asarray(b.transform.log_jacobian(z_prop))
                if lj_cur.ndim > 1:
                    lj_cur = lj_cur.sum(axis=tuple(range(1, lj_cur.ndim)))
                    lj_prop = lj_prop.sum(axis=tuple(range(1, lj_prop.ndim)))
                delta = np.where(mask, lj_prop - lj_cur, -np.inf)

                cs.state[name] = x_prop
                new_vals = {}
                for f in aligned[name]:
                    nv = _eval_factor(f, cs.state)
                    new_vals[f.name] = nv
                    delta = delta + (nv - cs.cache[f.name])
                for f, site in bound[name]:
                    nv = _eval_factor(f, cs.state)
                    new_vals[f.name] = nv
                    delta[site] += _total(nv) - _total(cs.cache[f.name])

                accept = np.log(rng.random(mask.shape[0])) < delta
                accept &= mask
                committed = np.where(
                    accept if cur.ndim == 1 else accept.reshape(
                        (-1,) + (1,) * (cur.ndim - 1)
                    ),
                    x_prop,
                    cur,
                )
                cs.state[name] = committed
                z_new = np.where(
                    accept if z_cur.ndim == 1 else accept.reshape(
                        (-1,) + (1,) * (z_cur.ndim - 1)
                    ),
                    z_prop,
                    z_cur,
                )
                cs.z[name] = z_new
                for f in aligned[name]:
                    old = cs.cache[f.name]
                    cs.cache[f.name] = np.where(accept, new_vals[f.name], old)
                for f, site in bound[name]:
                    if accept[site]:
                        cs.cache[f.name] = new_vals[f.name]
                    else:
                        # recompute not needed: state row reverted
                        pass
                if adapting:
                    cs.acc[name] += accept
                    cs.tries[name] += 1
                    if cs.tries[name] == config.adapt_window:
                        cs.windows[name] += 1
                        rate = cs.acc[name] / config.adapt_window
                        scale = 1.0 / math.sqrt(cs.windows[name])
                        cs.steps[name] = np.clip(
                            cs.steps[name]
                            * np.exp((rate - b.target_rate()) * scale),
                            1e-8,
                            1e3,
                        )
                        cs.acc[name][:] = 0.0
                        cs.tries[name] = 0
            else:
                cur = cs.state[name]
                z_cur = cs.z[name]
                step = cs.steps[name]
                if b.kind == "scalar":
                    z_prop = z_cur + step * rng.standard_normal()
                else:
                    z_prop = z_cur + step * rng.standard_normal(z_cur.shape)
                x_prop = b.transform.inverse(z_prop)
                lj = float(np.sum(b.transform.log_jacobian(z_prop))) - float(
                    np.sum(b.transform.log_jacobian(z_cur))
                )
                cs.state[name] = (
                    float(x_prop) if b.kind == "scalar" else np.asarray(x_prop)
                )
                delta = lj
                new_vals = {}
                for f in affecting[name]:
                    nv = _eval_factor(f, cs.state)
                    new_vals[f.name] = nv
                    delta += _total(nv) - _total(cs.cache[f.name])
                if log(rng.random()) < delta:
                    cs.z[name] = np.asarray(z_prop, dtype=float)
                    cs.cache.update(new_vals)
                    accepted = True
                else:
                    cs.state[name] = cur
                    accepted = False
                if adapting:
                    cs.acc[name] += accepted
                    cs.tries[name] += 1
                    if cs.tries[name] == config.adapt_window:
                        cs.windows[name] += 1
                        rate = cs.acc[name] / config.adapt_window
                        scale = 1.0 / math.sqrt(cs.windows[name])
                        cs.steps[name] = min(
                            max(
                                cs.steps[name]
                                * math.exp((rate - b.target_rate()) * scale),
                                1e-8,
                            ),
                            1e3,
                        )
                        cs.acc[name] = 0.0
                        cs.tries[name] = 0

        if it >= burn_in and (it - burn_in) % thin == 0:
            record()

    return draws


def run_chains(
    log_posterior,
    config: McmcConfig,
    *,
    init=None,
    dim: int | None = None,
    names: list[str] | None = None,
) -> PosteriorSummary:
    """Sample a posterior and summarize the pooled post-burn-in draws.

    ``log_posterior`` is either a :class:`BlockModel` or a plain
    callable over a parameter vector; in the latter case ``init`` (a
    value or a ``callable(rng) -> vector``) and ``dim`` are required.
    """
    if isinstance(log_posterior, BlockModel):
        model = log_posterior
    else:
        if init is None:
            raise DomainError("a plain callable posterior needs an init")
        probe = init(substream(config.seed, "probe")) if callable(init) else init
        probe = np.atleast_1d(np.asarray(probe, dtype=float))
        d = dim if dim is not None else probe.size

        if d == 1:
            wrapped_init = (
                (lambda rng: float(np.atleast_1d(init(rng))[0]))
                if callable(init)
                else float(probe[0])
            )
        else:
            wrapped_init = init if callable(init) else probe

        def fn(state):
            v = state["params"]
            vec = np.array([v]) if d == 1 else np.asarray(v, dtype=float)
            return float(log_posterior(vec))

        block = Block(
            name="params",
            kind="scalar" if d == 1 else "joint",
            shape=() if d == 1 else (d,),
            init=wrapped_init,
        )
        if names is not None:
            block.trace_names = list(names)
        model = BlockModel([block], [Factor("target", fn, ("params",))])

    t0 = time.monotonic()
    if config.threads > 1 and config.chains > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            chains = list(
                pool.map(
                    lambda c: _run_single_chain(model, config, c),
                    range(config.chains),
                )
            )
    else:
        chains = [_run_single_chain(model, config, c) for c in range(config.chains)]
    duration = time.monotonic() - t0

    draws = np.stack(chains)
    summary = summarize(draws, names=model.trace_names())
    summary.seed = config.seed
    summary.config = config
    summary.duration = duration
    return summary
