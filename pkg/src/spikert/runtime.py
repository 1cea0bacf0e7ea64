"""Event-driven execution of neural processing ensembles under a cost model.

Each timestep, every chip's timer fires: neuron cores read their input
buffers (DMA D), update neurons in index order and emit spike packets with
per-neuron send times; Poisson cores sample background sources and write
their buffers (DMA C); synapse cores process buffered spike packets until a
second timer event a fixed margin before the period end, flush whatever is
still queued, then write the next timestep's ring-buffer slot (DMA B).
Packet deliveries carry router transit latencies, and per-board clock drift
(with beacon correction) shifts every core's local timeline.

The whole machine advances in a single deterministic virtual timeline:
identical inputs give identical traces and profiles.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from . import matrices, trace, weights
from .kinetics import advance_state
from .clocks import ClockConfig, MachineClocks
from .costs import CostModel
from .machine import MachineSpec, auto_machine
from .mapping import (Ensemble, KeyAllocation, Placement, ROLE_NEURON, ROLE_POISSON,
                      ROLE_SYN_EXC_LOWER, ROLE_SYN_EXC_UPPER, ROLE_SYN_INH, SYNAPSE_ROLES,
                      allocate_keys, build_routing_tables, delivery_map,
                      destination_cores, is_lower_half, partition, place_radial,
                      subpops_per_population, unpack_key)
from .network import NetworkModel, PoissonInput


class SchedulingError(RuntimeError):
    """A core's fixed work cannot fit its timer period."""


RING_SLOTS = 256  # 255 future slots + the one being consumed


class RingBuffer:
    """Per-neuron circular accumulators of future synaptic input.

    Insertion targets an offset of 1..255 timesteps ahead of the current
    step; the slot for step t+1 is handed over (and zeroed) at the end of
    step t.  Values are integer accumulator units.
    """

    def __init__(self, n_neurons: int, data: np.ndarray | None = None):
        self.data = np.zeros((RING_SLOTS, n_neurons), dtype=np.int64) if data is None else data

    def insert(self, step: int, delays, targets, units) -> None:
        d = np.asarray(delays)
        if d.size and (d.min() < 1 or d.max() > 255):
            raise ValueError("ring buffer delay outside [1, 255]")
        np.add.at(self.data, ((step + d) & (RING_SLOTS - 1), targets), units)

    def transfer(self, step: int) -> np.ndarray:
        """Emit and zero the slot holding input for step+1."""
        idx = (step + 1) & (RING_SLOTS - 1)
        out = self.data[idx].copy()
        self.data[idx] = 0
        return out


@dataclass(frozen=True)
class MptEntry:
    key: int
    mask: int
    source_pop: int
    base_addr: int
    row_stride: int


class MasterPopulationTable:
    """Binary-searchable map from a packet key's routing prefix to the
    source population's synaptic matrix block."""

    ROUTE_MASK = 0xFFFF8000  # the 17 routing bits

    def __init__(self, entries: list[MptEntry]):
        self.entries = sorted(entries, key=lambda e: e.key)
        self._keys = [e.key for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, key: int) -> MptEntry | None:
        probe = key & self.ROUTE_MASK
        i = bisect.bisect_right(self._keys, probe) - 1
        if i >= 0 and self.entries[i].key == probe:
            return self.entries[i]
        return None

    def row_address(self, entry: MptEntry, subpop: int, neuron_id: int) -> int:
        return entry.base_addr + (subpop * 64 + neuron_id) * entry.row_stride


@dataclass
class ProfileRecord:
    core_id: str
    timestep: int
    received: int
    processed: int
    flushed: int
    zero_target: int
    kickstarts: int
    busy_us: float
    processed_events: int = 0
    flushed_events: int = 0

    def check(self) -> None:
        assert self.received == self.processed + self.flushed
        assert self.zero_target <= self.processed


class ProfileStore:
    """Per-core per-timestep accounting as column arrays."""

    COLUMNS = ("received", "processed", "flushed", "zero_target", "kickstarts", "busy_us")

    def __init__(self, core_meta: list[tuple[tuple[int, int], int, str, int]], n_steps: int):
        self.core_meta = core_meta
        n = len(core_meta)
        self.received = np.zeros((n, n_steps), dtype=np.int32)
        self.processed = np.zeros((n, n_steps), dtype=np.int32)
        self.flushed = np.zeros((n, n_steps), dtype=np.int32)
        self.zero_target = np.zeros((n, n_steps), dtype=np.int32)
        self.kickstarts = np.zeros((n, n_steps), dtype=np.int32)
        self.busy_us = np.zeros((n, n_steps), dtype=np.float64)
        self.processed_events = np.zeros((n, n_steps), dtype=np.int64)
        self.flushed_events = np.zeros((n, n_steps), dtype=np.int64)

    def label(self, row: int) -> str:
        (x, y), core, _, _ = self.core_meta[row]
        return f"{x},{y},{core}"

    def record(self, row: int, t: int) -> ProfileRecord:
        return ProfileRecord(self.label(row), t, int(self.received[row, t]),
                             int(self.processed[row, t]), int(self.flushed[row, t]),
                             int(self.zero_target[row, t]), int(self.kickstarts[row, t]),
                             float(self.busy_us[row, t]), int(self.processed_events[row, t]),
                             int(self.flushed_events[row, t]))

    def iter_records(self):
        for row in range(len(self.core_meta)):
            for t in range(self.received.shape[1]):
                yield self.record(row, t)

    def totals(self) -> dict:
        return {
            "received": int(self.received.sum()),
            "processed": int(self.processed.sum()),
            "flushed": int(self.flushed.sum()),
            "zero_target": int(self.zero_target.sum()),
            "processed_events": int(self.processed_events.sum()),
            "flushed_events": int(self.flushed_events.sum()),
            "max_flushed_in_timestep": int(self.flushed.max()) if self.flushed.size else 0,
        }

    def serialize(self) -> str:
        lines = ["# core_id timestep received processed flushed zero_target kickstarts busy_us"]
        n_steps = self.received.shape[1]
        for row in range(len(self.core_meta)):
            label = self.label(row)
            for t in range(n_steps):
                lines.append(
                    f"{label} {t} {self.received[row, t]} {self.processed[row, t]} "
                    f"{self.flushed[row, t]} {self.zero_target[row, t]} "
                    f"{self.kickstarts[row, t]} {self.busy_us[row, t]:.4f}")
        return "\n".join(lines) + "\n"

    def serialize_events(self) -> str:
        lines = ["# core_id timestep processed_events flushed_events"]
        n_steps = self.received.shape[1]
        for row in range(len(self.core_meta)):
            label = self.label(row)
            for t in range(n_steps):
                lines.append(f"{label} {t} {self.processed_events[row, t]} "
                             f"{self.flushed_events[row, t]}")
        return "\n".join(lines) + "\n"


class SynapseCoreState:
    """Runtime state of one synapse core: input spike buffer, ring buffers,
    master population table, and the synaptic rows it owns."""

    __slots__ = ("ensemble", "role", "chip", "core_id", "rate", "ring", "rows", "mpt",
                 "chip_syn_cores", "pending", "carry", "profile_row", "chip_row")

    def __init__(self, ensemble: Ensemble, role: str, chip, core_id: int,
                 ring: RingBuffer, mpt: MasterPopulationTable, rows: dict,
                 chip_syn_cores: int, profile_row: int):
        self.ensemble = ensemble
        self.role = role
        self.chip = chip
        self.core_id = core_id
        self.ring = ring
        self.rows = rows          # (source_pop, row_index) -> (targets, units, delays)
        self.mpt = mpt
        self.chip_syn_cores = chip_syn_cores
        self.pending: list[tuple] = []  # (arrival_us, sx, sy, score, key, emit_step)
        self.carry = 0.0
        self.profile_row = profile_row
        self.chip_row = 0
        self.rate = 1.0

    def _row_for(self, key: int):
        route, sub, nid = unpack_key(key)
        entry = self.mpt.lookup(key)
        if entry is None:
            raise RuntimeError(f"core {self.chip}/{self.core_id}: packet key 0x{key:08x} "
                               "has no master population table entry")
        return self.rows.get((entry.source_pop, sub * 64 + nid))

    def run_window(self, t: int, window_start: float, deadline: float,
                   costs: CostModel) -> tuple:
        """Process buffered packets until the pre-deadline timer event, flush
        the rest, then write the next slot (DMA B).  Times are global us;
        costs are local core us (scaled by the chip's crystal rate)."""
        pend = self.pending
        if len(pend) > 1:
            pend.sort()
        wcost = costs.sdram_write_us(self.chip_syn_cores)
        margin_g = costs.second_timer_margin_us / self.rate
        busy = max(window_start, window_start - margin_g + wcost / self.rate, self.carry)
        processed = flushed = zero = kick = 0
        ev_p = ev_f = late = 0
        busy_us = 0.0
        idx, n = 0, len(pend)
        while idx < n:
            pkt = pend[idx]
            arr = pkt[0]
            if arr >= deadline:
                break
            begin = arr if arr > busy else busy
            if begin >= deadline:
                break
            row = self._row_for(pkt[4])
            words = 0 if row is None else int(row[0].size)
            cost_local = costs.packet_processing_us(words, self.chip_syn_cores)
            if busy <= arr:
                kick += 1
                cost_local += costs.pipeline_kickstart_us
            busy = begin + cost_local / self.rate
            busy_us += cost_local
            processed += 1
            ev_p += words
            if words == 0:
                zero += 1
            else:
                np.add.at(self.ring.data, ((t + row[2]) & (RING_SLOTS - 1), row[0]), row[1])
            if pkt[5] != t:
                late += 1
            idx += 1
        j = idx
        while j < n and pend[j][0] < deadline:
            row = self._row_for(pend[j][4])
            ev_f += 0 if row is None else int(row[0].size)
            flushed += 1
            j += 1
        del pend[:j]
        busy_us += wcost
        dma_b_end = deadline + wcost / self.rate
        self.carry = busy if busy > dma_b_end else dma_b_end
        return processed + flushed, processed, flushed, zero, kick, busy_us, ev_p, ev_f, late


@dataclass(frozen=True)
class Seeds:
    poisson: int = 1
    drift: int = 2


@dataclass
class RunResult:
    trace: trace.SpikeTrace
    profile: ProfileStore
    sync_diagnostics: "object"
    late_packets: int
    poisson_saturations: int

    def flush_totals(self) -> dict:
        return self.profile.totals()


class HardwareSimulation:
    """Build and run the machine model for one network."""

    def __init__(self, network: NetworkModel, machine: MachineSpec | None = None,
                 costs: CostModel | None = None, clock_cfg: ClockConfig | None = None,
                 seeds: Seeds = Seeds(), slowdown: float = 1.0,
                 neurons_per_core: int = 64):
        if slowdown < 1.0:
            raise ValueError("slow-down multiplier must be >= 1")
        if network.projections is None:
            raise ValueError("hardware simulation needs sampled synapses")
        self.network = network
        self.costs = costs or CostModel()
        self.costs.validate()
        self.clock_cfg = clock_cfg or ClockConfig(drift_bound_ppm=0.0)
        self.seeds = seeds
        self.slowdown = float(slowdown)
        self.npc = neurons_per_core

        self.ensembles = partition(network, neurons_per_core)
        self.machine, self.placement = _place(self.ensembles, machine)
        self.keys = allocate_keys(self.placement)
        self.dests = destination_cores(self.placement, network.spec.projections)
        self.tables = build_routing_tables(self.placement, self.keys, self.dests)
        self.dmap = delivery_map(self.placement, self.keys, self.tables, self.dests)

        self.scales = matrices.accumulator_scales(network)
        self.encoded = matrices.encode_projections(network, self.scales)
        self._build_state()
        self._check_schedule()

    # -- construction -------------------------------------------------------

    def _build_state(self) -> None:
        ens = self.ensembles
        n_ens = len(ens)
        npc = self.npc

        pop_of_pad = np.full(n_ens * npc, -1, dtype=np.int64)
        self.global_of_pad = np.full(n_ens * npc, -1, dtype=np.int64)
        for e in ens:
            lo = e.index * npc
            pop_of_pad[lo:lo + e.count] = e.pop
            base = int(self.network.offsets[e.pop]) + e.neuron_lo
            self.global_of_pad[lo:lo + e.count] = np.arange(base, base + e.count)
        self.pop_of_pad = pop_of_pad
        self.consts = matrices.expand_constants(self.network, self.scales, pop_of_pad)

        self.v = np.zeros(n_ens * npc, dtype=np.float64)
        valid = self.global_of_pad >= 0
        self.v[valid] = self.network.v_init_mv[self.global_of_pad[valid]]
        self.i_syn = np.zeros(n_ens * npc, dtype=np.float64)
        self.ref = np.zeros(n_ens * npc, dtype=np.int64)

        # shared-memory images, one 64-wide row per ensemble
        self.sdram = {kind: np.zeros((n_ens, npc), dtype=np.int64)
                      for kind in ("exc_lower", "exc_upper", "inh", "poisson")}

        # profile rows for every modeled core, ordered by (chip, core id)
        core_meta = []
        for chip in sorted(self.placement.roster):
            for core, e_idx, role in sorted(self.placement.roster[chip]):
                core_meta.append((chip, core, role, e_idx))
        self.core_meta = core_meta
        self._profile_row = {(meta[3], meta[2]): i for i, meta in enumerate(core_meta)}

        chip_syn_count = {chip: sum(1 for _, _, role in cores if role in SYNAPSE_ROLES)
                          for chip, cores in self.placement.roster.items()}
        self.chip_syn_count = chip_syn_count

        rows_by_core = self._build_synaptic_rows()
        mpts = self._build_mpts(rows_by_core)
        self.ring_data = np.zeros((n_ens * 3, RING_SLOTS, npc), dtype=np.int64)
        self.syn_cores: list[SynapseCoreState] = []
        kind_of_role = {ROLE_SYN_EXC_LOWER: "exc_lower", ROLE_SYN_EXC_UPPER: "exc_upper",
                        ROLE_SYN_INH: "inh"}
        self._ring_kind_rows = {kind: [] for kind in kind_of_role.values()}
        self._ring_core_ids = {kind: [] for kind in kind_of_role.values()}
        for e in ens:
            for k, role in enumerate(SYNAPSE_ROLES):
                chip, core = self.placement.core_ref(e.index, role)
                ci = e.index * 3 + k
                ring = RingBuffer(npc, self.ring_data[ci])
                sc = SynapseCoreState(e, role, chip, core, ring,
                                      mpts[(e.index, role)],
                                      rows_by_core.get((e.index, role), {}),
                                      chip_syn_count[chip],
                                      self._profile_row[(e.index, role)])
                self.syn_cores.append(sc)
                kind = kind_of_role[role]
                self._ring_kind_rows[kind].append(e.index)
                self._ring_core_ids[kind].append(ci)
        for kind in self._ring_kind_rows:
            self._ring_kind_rows[kind] = np.asarray(self._ring_kind_rows[kind])
            self._ring_core_ids[kind] = np.asarray(self._ring_core_ids[kind])
        self._core_by_ref = {(sc.chip, sc.core_id): sc for sc in self.syn_cores}
        self.dest_cores = {
            e.index: [(self._core_by_ref[(chip, core)], transit_ns * 1e-3)
                      for chip, core, transit_ns in self.dmap[e.index]]
            for e in ens}

        self.chips = sorted(self.placement.roster)
        self._chip_row = {chip: i for i, chip in enumerate(self.chips)}
        self.ens_chip_row = np.array([self._chip_row[self.placement.chip_of[e.index]]
                                      for e in ens], dtype=np.int64)

    def _build_synaptic_rows(self) -> dict:
        npc = self.npc
        n_subs = subpops_per_population(self.ensembles)
        ens_start = {}
        for e in self.ensembles:
            ens_start.setdefault(e.pop, e.index)
        rows: dict[tuple[int, str], dict] = {}
        for enc in self.encoded:
            src_pol = self.network.populations[enc.source_pop].polarity
            src_sub = enc.pre_local // npc
            row_idx = src_sub * 64 + (enc.pre_local % npc)
            tgt_ens = ens_start[enc.target_pop] + enc.post_local // npc
            tgt_in_core = enc.post_local % npc
            if src_pol == "inh":
                roles = np.zeros(enc.pre_local.size, dtype=np.int64)  # 0 -> inh
                role_names = {0: ROLE_SYN_INH}
            else:
                half = (n_subs[enc.source_pop] + 1) // 2
                roles = (src_sub >= half).astype(np.int64)  # 0 lower, 1 upper
                role_names = {0: ROLE_SYN_EXC_LOWER, 1: ROLE_SYN_EXC_UPPER}
            order = np.lexsort((row_idx, roles, tgt_ens))
            te, ro, ri = tgt_ens[order], roles[order], row_idx[order]
            ti, un, de = tgt_in_core[order], enc.units[order], enc.delays[order]
            boundaries = np.flatnonzero((np.diff(te) != 0) | (np.diff(ro) != 0)
                                        | (np.diff(ri) != 0)) + 1
            for seg in np.split(np.arange(te.size), boundaries):
                if seg.size == 0:
                    continue
                s0 = seg[0]
                key = (int(te[s0]), role_names[int(ro[s0])])
                rows.setdefault(key, {})[(enc.source_pop, int(ri[s0]))] = (
                    ti[seg].copy(), un[seg].copy(), de[seg].copy())
        return rows

    def _build_mpts(self, rows_by_core: dict) -> dict:
        """One master population table per synapse core: an entry for every
        source population whose packets are routed to that core."""
        core_key_of = {}
        for chip, cores in self.placement.roster.items():
            for core_id, e_idx, role in cores:
                core_key_of[(chip, core_id)] = (e_idx, role)
        sources_for: dict[tuple[int, str], set[int]] = {}
        for e in self.ensembles:
            for chip, core, _ in self.dmap[e.index]:
                sources_for.setdefault(core_key_of[(chip, core)], set()).add(e.pop)
        n_subs = subpops_per_population(self.ensembles)
        mpts = {}
        addr_cursor: dict[tuple[int, int], int] = {}
        for e in self.ensembles:
            chip = self.placement.chip_of[e.index]
            for role in SYNAPSE_ROLES:
                key = (e.index, role)
                rows = rows_by_core.get(key, {})
                entries = []
                for src_pop in sorted(sources_for.get(key, ())):
                    base = addr_cursor.get(chip, 0x6000_0000)
                    max_words = max((r[0].size for (sp, _), r in rows.items()
                                     if sp == src_pop), default=0)
                    stride = 4 * (1 + max_words)  # header word + synaptic words
                    n_rows = n_subs[src_pop] * 64
                    entries.append(MptEntry(src_pop << 15, MasterPopulationTable.ROUTE_MASK,
                                            src_pop, base, stride))
                    addr_cursor[chip] = base + n_rows * stride
                mpts[key] = MasterPopulationTable(entries)
        return mpts

    def _check_schedule(self) -> None:
        cm = self.costs
        period_local = cm.timer_period_us * self.slowdown
        margin = cm.second_timer_margin_us
        for chip, cores in self.placement.roster.items():
            n_neuron = sum(1 for _, _, r in cores if r == ROLE_NEURON)
            n_syn = self.chip_syn_count[chip]
            for core, e_idx, role in cores:
                e = self.ensembles[e_idx]
                if role == ROLE_NEURON:
                    busy = (cm.neuron_input_read_us + e.count * cm.neuron_update_us
                            + cm.sdram_write_us(n_neuron))
                    if busy > period_local:
                        raise SchedulingError(
                            f"neuron core {chip}/{core}: update ({busy:.2f} us) overruns "
                            f"the {period_local:.2f} us timer period")
                elif role == ROLE_POISSON:
                    if cm.poisson_update_and_transfer_us > period_local:
                        raise SchedulingError(
                            f"poisson core {chip}/{core}: update exceeds the timer period")
            if cm.sdram_write_us(n_syn) > margin:
                raise SchedulingError(
                    f"chip {chip}: ring-buffer write ({cm.sdram_write_us(n_syn):.2f} us) "
                    f"exceeds the pre-deadline margin")

    # -- execution -----------------------------------------------------------

    def run(self, duration_ms: float, discard_ms: float = 0.0,
            with_profile: bool = True) -> RunResult:
        network = self.network
        cm = self.costs
        n_steps = int(round(duration_ms / network.dt_ms))
        bank = matrices.PoissonBank(network, self.seeds.poisson, n_steps)

        period_local_us = cm.timer_period_us * self.slowdown
        clocks = MachineClocks(self.machine, self.clock_cfg, self.seeds.drift,
                               self.chips, period_local_us, cm.clock_hz)
        for sc in self.syn_cores:
            sc.rate = clocks.clocks[sc.chip].rate
            sc.chip_row = self._chip_row[sc.chip]
            sc.pending.clear()
            sc.carry = 0.0
        self.ring_data[:] = 0
        for arr in self.sdram.values():
            arr[:] = 0

        profile = ProfileStore(self.core_meta, n_steps if with_profile else 0)
        ens = self.ensembles
        npc = self.npc
        consts = self.consts
        syn_profile_rows = np.array([sc.profile_row for sc in self.syn_cores])
        syn_wcost = np.array([cm.sdram_write_us(sc.chip_syn_cores) for sc in self.syn_cores])

        beacon_steps = max(1, round(self.clock_cfg.beacon_interval_s * 1e6 / period_local_us))

        spike_steps: list[int] = []
        spike_pops: list[int] = []
        spike_neurons: list[int] = []
        late_packets = 0
        poisson_sat = 0

        chip_rates = np.array([clocks.clocks[c].rate for c in self.chips])
        ens_rate = chip_rates[self.ens_chip_row]
        read_g = cm.neuron_input_read_us / ens_rate
        upd_g = cm.neuron_update_us / ens_rate

        for t in range(n_steps):
            starts = np.empty(len(self.chips))
            durations = np.empty(len(self.chips))
            for i, chip in enumerate(self.chips):
                starts[i], durations[i] = clocks.clocks[chip].advance_period()

            # neuron cores: read DMA D image, advance, emit spikes
            exc_units = (self.sdram["exc_lower"] + self.sdram["exc_upper"]).reshape(-1)
            inh_units = self.sdram["inh"].reshape(-1)
            pois_units = self.sdram["poisson"].reshape(-1)
            inputs = weights.combine_input_pa(exc_units, inh_units, pois_units,
                                              consts.exc_factor, consts.inh_factor,
                                              consts.poisson_factor)
            if not np.isfinite(inputs).all():
                bad = int(np.flatnonzero(~np.isfinite(inputs))[0])
                raise ValueError(f"non-finite synaptic input for padded neuron {bad}")
            self.v, self.i_syn, self.ref, fired = _advance(
                self.v, self.i_syn, self.ref, inputs, consts)

            for g in np.flatnonzero(fired):
                e_idx = g // npc
                local = g - e_idx * npc
                e = ens[e_idx]
                spike_steps.append(t)
                spike_pops.append(e.pop)
                spike_neurons.append(e.neuron_lo + local)
                dests = self.dest_cores[e_idx]
                if not dests:
                    continue
                chip_row = self.ens_chip_row[e_idx]
                send = starts[chip_row] + read_g[e_idx] + (local + 1) * upd_g[e_idx]
                chip = self.chips[chip_row]
                score = self.placement.core_of[(e_idx, ROLE_NEURON)]
                key = self.keys.prefix_of[e_idx] | int(local)
                for sc, transit_us in dests:
                    sc.pending.append((send + transit_us, chip[0], chip[1], score, key, t))

            # poisson cores sample and write the next step's buffer (DMA C)
            for e in ens:
                if not e.has_poisson:
                    continue
                units, clipped = bank.units_slice(e.pop, e.neuron_lo, e.count, t)
                self.sdram["poisson"][e.index, :e.count] = units
                poisson_sat += clipped

            # synapse cores: spike processing window, flush, DMA B accounting
            if with_profile:
                profile.busy_us[syn_profile_rows, t] = syn_wcost
            for sc in self.syn_cores:
                if not sc.pending:
                    continue
                row_chip = sc.chip_row
                deadline = (starts[row_chip] + durations[row_chip]
                            - cm.second_timer_margin_us / sc.rate)
                counters = sc.run_window(t, starts[row_chip], deadline, cm)
                late_packets += counters[8]
                if with_profile:
                    r = sc.profile_row
                    profile.received[r, t] = counters[0]
                    profile.processed[r, t] = counters[1]
                    profile.flushed[r, t] = counters[2]
                    profile.zero_target[r, t] = counters[3]
                    profile.kickstarts[r, t] = counters[4]
                    profile.busy_us[r, t] = counters[5]
                    profile.processed_events[r, t] = counters[6]
                    profile.flushed_events[r, t] = counters[7]

            # ring-buffer handover: slot for t+1 moves to shared memory
            out = self.ring_data[:, (t + 1) & (RING_SLOTS - 1), :]
            for kind in ("exc_lower", "exc_upper", "inh"):
                self.sdram[kind][self._ring_kind_rows[kind]] = out[self._ring_core_ids[kind]]
            out[:] = 0

            if self.clock_cfg.protocol_enabled and (t + 1) % beacon_steps == 0:
                clocks.run_round(record=True)

        if with_profile:
            self._fill_constant_busy(profile)

        pop_names = [p.name for p in network.populations]
        pop_sizes = [p.size for p in network.populations]
        pop_pol = [p.polarity for p in network.populations]
        spike_trace = trace.from_step_records(spike_steps, spike_pops, spike_neurons,
                                              n_steps, network.dt_ms, pop_names, pop_sizes,
                                              pop_pol, discard_ms).sorted()
        return RunResult(spike_trace, profile, clocks.diagnostics, late_packets, poisson_sat)

    def _fill_constant_busy(self, profile: ProfileStore) -> None:
        cm = self.costs
        for row, (chip, core, role, e_idx) in enumerate(self.core_meta):
            e = self.ensembles[e_idx]
            n_neuron = sum(1 for _, _, r in self.placement.roster[chip] if r == ROLE_NEURON)
            n_pois = sum(1 for _, _, r in self.placement.roster[chip] if r == ROLE_POISSON)
            if role == ROLE_NEURON:
                profile.busy_us[row, :] = (cm.neuron_input_read_us
                                           + e.count * cm.neuron_update_us
                                           + cm.sdram_write_us(n_neuron))
            elif role == ROLE_POISSON:
                profile.busy_us[row, :] = cm.poisson_update_and_transfer_us


def _advance(v, i_syn, ref, inputs, consts: matrices.NeuronConstants):
    return advance_state(v, i_syn, ref, inputs, consts.decay_v, consts.decay_i,
                         consts.kernel, consts.e_eff, consts.v_reset, consts.v_theta,
                         consts.ref_steps)


def _place(ensembles, machine: MachineSpec | None):
    if machine is not None:
        return machine, place_radial(ensembles, machine)
    total_cores = sum(e.n_cores for e in ensembles)
    need = -(-total_cores // 16)
    while True:
        candidate = auto_machine(need)
        try:
            return candidate, place_radial(ensembles, candidate)
        except Exception:
            need = candidate.n_chips() + 1
            if need > 4096:
                raise
