"""Direct clock-driven reference simulation of a network model.

No hardware, cost, or flush modeling: every spike's contribution is
delivered after exactly its synaptic delay.  The oracle shares the neuron
integrator, the Poisson streams and (when quantization is on) the synaptic
weight encoder with the machine model, so a machine run that never flushes
and never misses a window must reproduce this trace byte for byte.
"""

from __future__ import annotations

import numpy as np

from . import matrices, trace, weights
from .kinetics import advance_state
from .network import NetworkModel
from .runtime import RING_SLOTS


def oracle_simulate(network: NetworkModel, duration_ms: float, poisson_seed: int,
                    quantize: bool = True, discard_ms: float = 0.0) -> trace.SpikeTrace:
    if network.projections is None:
        raise ValueError("oracle needs sampled synapses")
    n_steps = int(round(duration_ms / network.dt_ms))
    n = network.total_neurons
    pop_of = np.repeat(np.arange(len(network.populations), dtype=np.int64),
                       [p.size for p in network.populations])
    scales = matrices.accumulator_scales(network)
    consts = matrices.expand_constants(network, scales, pop_of)
    bank = matrices.PoissonBank(network, poisson_seed, n_steps)

    encoded = matrices.encode_projections(network, scales)
    deliveries = matrices.source_delivery_index(network, encoded)
    src_polarity = [p.polarity for p in network.populations]

    if not quantize:
        float_acc = np.zeros((RING_SLOTS, n), dtype=np.float64)
        float_rows = _float_delivery_index(network)

    acc_exc = np.zeros((RING_SLOTS, n), dtype=np.int64)
    acc_inh = np.zeros((RING_SLOTS, n), dtype=np.int64)

    v = network.v_init_mv.copy()
    i_syn = np.zeros(n, dtype=np.float64)
    ref = np.zeros(n, dtype=np.int64)

    zero_units = np.zeros(n, dtype=np.int64)
    spike_steps: list[int] = []
    spike_pops: list[int] = []
    spike_neurons: list[int] = []

    for t in range(n_steps):
        slot = t & (RING_SLOTS - 1)
        pois_units = bank.units_at(t - 1) if t > 0 else zero_units
        if quantize:
            inputs = weights.combine_input_pa(acc_exc[slot], acc_inh[slot], pois_units,
                                              consts.exc_factor, consts.inh_factor,
                                              consts.poisson_factor)
            acc_exc[slot] = 0
            acc_inh[slot] = 0
        else:
            inputs = float_acc[slot] + _float_poisson(network, bank, t - 1, n)
            float_acc[slot] = 0.0
        if not np.isfinite(inputs).all():
            bad = int(np.flatnonzero(~np.isfinite(inputs))[0])
            pop, local = network.pop_of_global(bad)
            raise ValueError(f"non-finite input for neuron "
                             f"{network.populations[pop].name}/{local}")
        v, i_syn, ref, fired = advance_state(v, i_syn, ref, inputs, consts.decay_v,
                                             consts.decay_i, consts.kernel, consts.e_eff,
                                             consts.v_reset, consts.v_theta,
                                             consts.ref_steps)
        for g in np.flatnonzero(fired):
            pop = int(pop_of[g])
            local = int(g - network.offsets[pop])
            spike_steps.append(t)
            spike_pops.append(pop)
            spike_neurons.append(local)
            if quantize:
                rows = deliveries[pop]
                lo, hi = rows.row_ptr[local], rows.row_ptr[local + 1]
                if hi > lo:
                    acc = acc_exc if src_polarity[pop] == "exc" else acc_inh
                    slots = (t + rows.delays[lo:hi]) & (RING_SLOTS - 1)
                    np.add.at(acc, (slots, rows.target_global[lo:hi]), rows.units[lo:hi])
            else:
                rows = float_rows[pop]
                lo, hi = rows["row_ptr"][local], rows["row_ptr"][local + 1]
                if hi > lo:
                    slots = (t + rows["delays"][lo:hi]) & (RING_SLOTS - 1)
                    np.add.at(float_acc, (slots, rows["targets"][lo:hi]),
                              rows["weights"][lo:hi])

    pop_names = [p.name for p in network.populations]
    pop_sizes = [p.size for p in network.populations]
    pop_pol = [p.polarity for p in network.populations]
    return trace.from_step_records(spike_steps, spike_pops, spike_neurons, n_steps,
                                   network.dt_ms, pop_names, pop_sizes, pop_pol,
                                   discard_ms).sorted()


def _float_delivery_index(network: NetworkModel):
    """Unquantized per-source rows (signed float weights, global targets)."""
    out = []
    scales = matrices.accumulator_scales(network)
    encoded = matrices.encode_projections(network, scales)
    merged = matrices.source_delivery_index(network, encoded)
    for p, rows in enumerate(merged):
        out.append({"row_ptr": rows.row_ptr, "targets": rows.target_global,
                    "delays": rows.delays, "weights": np.zeros(rows.units.size)})
    # overwrite unit magnitudes with the raw signed weights, projection order
    cursor = [r.row_ptr[:-1].copy() for r in merged]
    for enc, proj in zip(encoded, network.projections):
        p = enc.source_pop
        size = network.populations[p].size
        counts = np.bincount(enc.pre_local, minlength=size)
        row_start = np.concatenate([[0], np.cumsum(counts)])[:-1]
        intra = np.arange(enc.pre_local.size, dtype=np.int64) - np.repeat(row_start, counts)
        pos = np.repeat(cursor[p], counts) + intra
        out[p]["weights"][pos] = proj.weight_pa
        cursor[p] += counts
    return out


def _float_poisson(network: NetworkModel, bank: matrices.PoissonBank, t: int, n: int):
    out = np.zeros(n, dtype=np.float64)
    if t < 0:
        return out
    for p, mat in bank.counts.items():
        lo = int(network.offsets[p])
        w = network.populations[p].background.weight_pa
        out[lo:lo + mat.shape[0]] = mat[:, t].astype(np.float64) * w
    return out
