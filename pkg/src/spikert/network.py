"""Network construction from a declarative spec file.

A network spec is structured text with repeated ``[population]`` and
``[projection]`` sections plus ``[simulation]`` / ``[neuron_defaults]``.
Building materializes neurons and samples synapses: each ordered (pre, post)
pair is connected independently with the projection probability, weights are
normal-distributed then sign-clamped toward the source polarity (Dale's
law), and delays are normal-distributed, rounded to the nearest timestep
and clamped to the representable [1, 255] step range.

Everything is driven by named substreams of one seed, so a (spec, seed)
pair always produces the same network, byte for byte.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, replace

import numpy as np

from .kinetics import NeuronParams, make_rng

MAX_DELAY_STEPS = 255


class SpecError(ValueError):
    """Raised when a spec file fails to parse or validate."""


@dataclass(frozen=True)
class DCInput:
    i_dc_pa: float


@dataclass(frozen=True)
class PoissonInput:
    rate_hz: float
    weight_pa: float


@dataclass(frozen=True)
class PopulationSpec:
    name: str
    size: int
    polarity: str  # "exc" | "inh"
    background: DCInput | PoissonInput
    params: NeuronParams

    def validate(self) -> None:
        if self.size < 1:
            raise SpecError(f"population {self.name}: size must be >= 1")
        if self.polarity not in ("exc", "inh"):
            raise SpecError(f"population {self.name}: polarity must be exc or inh")
        if isinstance(self.background, PoissonInput) and self.background.rate_hz < 0:
            raise SpecError(f"population {self.name}: negative poisson rate")


@dataclass(frozen=True)
class ProjectionSpec:
    source: str
    target: str
    probability: float
    weight_pa: float  # magnitude of the mean; sign comes from source polarity
    weight_sd_pa: float
    delay_ms: float
    delay_sd_ms: float

    @property
    def name(self) -> str:
        return f"{self.source}->{self.target}"


@dataclass(frozen=True)
class VInit:
    mode: str = "rest"  # "rest" | "normal"
    mean_mv: float = 0.0
    sd_mv: float = 0.0


@dataclass(frozen=True)
class NetworkSpec:
    dt_ms: float
    populations: tuple[PopulationSpec, ...]
    projections: tuple[ProjectionSpec, ...]
    v_init: VInit = VInit()
    scale: float = 1.0

    def validate(self) -> None:
        if self.dt_ms <= 0:
            raise SpecError("dt_ms must be positive")
        names = [p.name for p in self.populations]
        if len(set(names)) != len(names):
            raise SpecError("duplicate population names")
        for p in self.populations:
            p.validate()
            p.params.validate(self.dt_ms)
        known = set(names)
        for pr in self.projections:
            if pr.source not in known or pr.target not in known:
                raise SpecError(f"projection {pr.name}: unknown population")
            if not 0.0 <= pr.probability <= 1.0:
                raise SpecError(f"projection {pr.name}: probability out of [0,1]")
            if pr.weight_sd_pa < 0 or pr.delay_sd_ms < 0:
                raise SpecError(f"projection {pr.name}: negative spread")
            if pr.weight_pa < 0:
                raise SpecError(f"projection {pr.name}: weight given as negative magnitude")
            if pr.delay_ms > MAX_DELAY_STEPS * self.dt_ms:
                raise SpecError(
                    f"projection {pr.name}: mean delay {pr.delay_ms} ms exceeds "
                    f"{MAX_DELAY_STEPS} * dt = {MAX_DELAY_STEPS * self.dt_ms} ms")

    def population(self, name: str) -> PopulationSpec:
        for p in self.populations:
            if p.name == name:
                return p
        raise KeyError(name)

    def total_neurons(self) -> int:
        return sum(p.size for p in self.populations)


def scale_network(spec: NetworkSpec, factor: float) -> NetworkSpec:
    """Uniformly scale population sizes; everything else untouched."""
    if not 0.0 < factor <= 1.0:
        raise SpecError(f"scale factor must be in (0, 1], got {factor}")
    if factor == 1.0:
        return spec
    pops = tuple(replace(p, size=max(1, round(p.size * factor))) for p in spec.populations)
    return replace(spec, populations=pops, scale=spec.scale * factor)


# ---------------------------------------------------------------------------
# Spec file parsing / serialization

_SIM_KEYS = {"dt_ms": float, "v_init": str, "v_init_mean_mv": float, "v_init_sd_mv": float,
             "scale": float}
_PARAM_KEYS = {"tau_m_ms": float, "tau_syn_ms": float, "e_rest_mv": float, "r_mohm": float,
               "v_theta_mv": float, "v_reset_mv": float, "t_ref_ms": float}
_POP_KEYS = {"name": str, "size": int, "polarity": str, "poisson_rate_hz": float,
             "poisson_weight_pa": float, "dc_current_pa": float, **_PARAM_KEYS}
_PROJ_KEYS = {"source": str, "target": str, "probability": float, "weight_pa": float,
              "weight_sd_pa": float, "delay_ms": float, "delay_sd_ms": float}


def _parse_sections(text: str) -> list[tuple[str, dict]]:
    sections: list[tuple[str, dict]] = []
    current: dict | None = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = {}
            sections.append((line[1:-1].strip(), current))
            continue
        if "=" not in line or current is None:
            raise SpecError(f"line {lineno}: expected 'key = value' inside a section")
        key, value = (part.strip() for part in line.split("=", 1))
        current[key] = value
    return sections


def _typed(section: str, data: dict, schema: dict) -> dict:
    out = {}
    for key, value in data.items():
        if key not in schema:
            raise SpecError(f"[{section}]: unknown key '{key}'")
        try:
            out[key] = schema[key](value)
        except ValueError as exc:
            raise SpecError(f"[{section}] {key}: {exc}") from None
    return out


def parse_network_spec(text: str, input_variant: str | None = None) -> NetworkSpec:
    """Parse a network spec; input_variant selects dc/poisson background when
    a population declares both."""
    sim: dict = {}
    defaults: dict = {}
    pops: list[PopulationSpec] = []
    projs: list[ProjectionSpec] = []
    for name, data in _parse_sections(text):
        if name == "simulation":
            sim = _typed(name, data, _SIM_KEYS)
        elif name == "neuron_defaults":
            defaults = _typed(name, data, _PARAM_KEYS)
        elif name == "population":
            d = _typed(name, data, _POP_KEYS)
            for key in ("name", "size", "polarity"):
                if key not in d:
                    raise SpecError(f"[population]: missing '{key}'")
            params_kw = {**defaults, **{k: d[k] for k in _PARAM_KEYS if k in d}}
            missing = [k for k in _PARAM_KEYS if k not in params_kw]
            if missing:
                raise SpecError(f"population {d['name']}: missing neuron params {missing}")
            background = _resolve_background(d, input_variant)
            params = NeuronParams(i_dc_pa=background.i_dc_pa if isinstance(background, DCInput) else 0.0,
                                  **params_kw)
            pops.append(PopulationSpec(d["name"], d["size"], d["polarity"], background, params))
        elif name == "projection":
            d = _typed(name, data, _PROJ_KEYS)
            missing = [k for k in _PROJ_KEYS if k not in d]
            if missing:
                raise SpecError(f"[projection]: missing {missing}")
            projs.append(ProjectionSpec(**d))
        else:
            raise SpecError(f"unknown section [{name}]")
    if "dt_ms" not in sim:
        raise SpecError("[simulation] dt_ms is required")
    v_init = VInit(sim.get("v_init", "rest"), sim.get("v_init_mean_mv", 0.0),
                   sim.get("v_init_sd_mv", 0.0))
    if v_init.mode not in ("rest", "normal"):
        raise SpecError("v_init must be 'rest' or 'normal'")
    spec = NetworkSpec(sim["dt_ms"], tuple(pops), tuple(projs), v_init, sim.get("scale", 1.0))
    spec.validate()
    return spec


def _resolve_background(d: dict, variant: str | None):
    has_poisson = "poisson_rate_hz" in d
    has_dc = "dc_current_pa" in d
    if variant == "poisson" or (variant is None and has_poisson and not has_dc):
        if not has_poisson:
            raise SpecError(f"population {d['name']}: no poisson background in spec")
        return PoissonInput(d["poisson_rate_hz"], d.get("poisson_weight_pa", 0.0))
    if variant == "dc" or (variant is None and has_dc and not has_poisson):
        if not has_dc:
            raise SpecError(f"population {d['name']}: no dc background in spec")
        return DCInput(d["dc_current_pa"])
    if variant is None:
        raise SpecError(f"population {d['name']}: declares both backgrounds; "
                        "pick an input variant")
    raise SpecError(f"unknown input variant '{variant}'")


def load_network_spec(path, input_variant: str | None = None) -> NetworkSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_network_spec(fh.read(), input_variant)


def serialize_network_spec(spec: NetworkSpec) -> str:
    """Canonical text form; parse(serialize(s)) == s."""
    out = io.StringIO()
    out.write("[simulation]\n")
    out.write(f"dt_ms = {spec.dt_ms!r}\n")
    out.write(f"v_init = {spec.v_init.mode}\n")
    if spec.v_init.mode == "normal":
        out.write(f"v_init_mean_mv = {spec.v_init.mean_mv!r}\n")
        out.write(f"v_init_sd_mv = {spec.v_init.sd_mv!r}\n")
    out.write(f"scale = {spec.scale!r}\n")
    for p in spec.populations:
        out.write("\n[population]\n")
        out.write(f"name = {p.name}\nsize = {p.size}\npolarity = {p.polarity}\n")
        if isinstance(p.background, PoissonInput):
            out.write(f"poisson_rate_hz = {p.background.rate_hz!r}\n")
            out.write(f"poisson_weight_pa = {p.background.weight_pa!r}\n")
        else:
            out.write(f"dc_current_pa = {p.background.i_dc_pa!r}\n")
        for key in _PARAM_KEYS:
            out.write(f"{key} = {getattr(p.params, key)!r}\n")
    for pr in spec.projections:
        out.write("\n[projection]\n")
        out.write(f"source = {pr.source}\ntarget = {pr.target}\n")
        for key in ("probability", "weight_pa", "weight_sd_pa", "delay_ms", "delay_sd_ms"):
            out.write(f"{key} = {getattr(pr, key)!r}\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# Materialized network

@dataclass
class SampledProjection:
    """CSR-style synapse store for one projection: row r holds the synapses
    of source neuron r (local index) onto the target population."""

    spec: ProjectionSpec
    source_pop: int
    target_pop: int
    row_ptr: np.ndarray    # int64[n_pre + 1]
    post_local: np.ndarray  # int32, target-local neuron index
    weight_pa: np.ndarray  # float64, signed
    delay_steps: np.ndarray  # int16, [1, 255]

    @property
    def count(self) -> int:
        return int(self.post_local.size)

    def row(self, pre_local: int):
        lo, hi = self.row_ptr[pre_local], self.row_ptr[pre_local + 1]
        return self.post_local[lo:hi], self.weight_pa[lo:hi], self.delay_steps[lo:hi]


@dataclass
class NetworkModel:
    spec: NetworkSpec
    seed: int
    offsets: np.ndarray  # int64[n_pops + 1], global index ranges per population
    v_init_mv: np.ndarray
    projections: list[SampledProjection] | None  # None when synapses not sampled

    @property
    def dt_ms(self) -> float:
        return self.spec.dt_ms

    @property
    def populations(self) -> tuple[PopulationSpec, ...]:
        return self.spec.populations

    @property
    def total_neurons(self) -> int:
        return int(self.offsets[-1])

    def synapse_count(self) -> int:
        if self.projections is None:
            raise ValueError("synapses were not sampled")
        return sum(p.count for p in self.projections)

    def pop_of_global(self, idx: int) -> tuple[int, int]:
        pop = int(np.searchsorted(self.offsets, idx, side="right")) - 1
        return pop, idx - int(self.offsets[pop])

    def synapses_from(self, global_idx: int):
        """All synapses of one source neuron as (target_global, w_pa, delay) rows."""
        pop, local = self.pop_of_global(global_idx)
        for proj in self.projections or ():
            if proj.source_pop != pop:
                continue
            tl, w, d = proj.row(local)
            yield proj, tl + int(self.offsets[proj.target_pop]), w, d

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(serialize_network_spec(self.spec).encode())
        h.update(str(self.seed).encode())
        h.update(np.ascontiguousarray(self.v_init_mv).tobytes())
        for proj in self.projections or ():
            for arr in (proj.row_ptr, proj.post_local, proj.weight_pa, proj.delay_steps):
                h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def build_network(spec: NetworkSpec, seed: int, sample_synapses: bool = True) -> NetworkModel:
    """Materialize a NetworkSpec into neurons and sampled synapses."""
    spec.validate()
    sizes = np.array([p.size for p in spec.populations], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    v_init = np.empty(int(offsets[-1]), dtype=np.float64)
    for i, pop in enumerate(spec.populations):
        lo, hi = int(offsets[i]), int(offsets[i + 1])
        if spec.v_init.mode == "normal":
            rng = make_rng(seed, "vinit", pop.name)
            v_init[lo:hi] = rng.normal(spec.v_init.mean_mv, spec.v_init.sd_mv, pop.size)
        else:
            v_init[lo:hi] = pop.params.e_rest_mv

    projections = None
    if sample_synapses:
        pop_index = {p.name: i for i, p in enumerate(spec.populations)}
        projections = []
        for j, proj in enumerate(spec.projections):
            projections.append(_sample_projection(spec, proj, j, pop_index, seed))
    return NetworkModel(spec, seed, offsets, v_init, projections)


def _sample_projection(spec: NetworkSpec, proj: ProjectionSpec, index: int,
                       pop_index: dict, seed: int) -> SampledProjection:
    src = spec.population(proj.source)
    tgt = spec.population(proj.target)
    rng = make_rng(seed, f"projection:{index}:{proj.name}")
    n_pre, n_post = src.size, tgt.size

    row_ptr = np.zeros(n_pre + 1, dtype=np.int64)
    rows: list[np.ndarray] = []
    if proj.probability > 0.0:
        for pre in range(n_pre):
            hits = np.flatnonzero(rng.random(n_post) < proj.probability)
            rows.append(hits.astype(np.int32))
            row_ptr[pre + 1] = row_ptr[pre] + hits.size
    else:
        row_ptr[:] = 0
    post = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int32)
    total = int(row_ptr[-1])

    sign = 1.0 if src.polarity == "exc" else -1.0
    w = rng.normal(sign * proj.weight_pa, proj.weight_sd_pa, total)
    w = np.maximum(w, 0.0) if sign > 0 else np.minimum(w, 0.0)

    d = rng.normal(proj.delay_ms, proj.delay_sd_ms, total)
    steps = np.floor(d / spec.dt_ms + 0.5).astype(np.int64)
    steps = np.clip(steps, 1, MAX_DELAY_STEPS).astype(np.int16)

    return SampledProjection(proj, pop_index[proj.source], pop_index[proj.target],
                             row_ptr, post, w, steps)
