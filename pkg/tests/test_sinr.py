"""Decode pipeline tests: scalar reference ops, the vectorized engine, metrics."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unbsim.channel import ChannelRealization, build_channel_realization, path_loss_db
from unbsim.core import Assignment, SimConfig, Topology, TransmissionEvent
from unbsim.sinr import (
    DecodeTable,
    build_decode_table,
    compute_sinr_table,
    interference_power_mw,
    load_decode_table,
    metrics,
    packet_decoded,
    save_decode_table,
    sinr_db,
    time_freq_overlap,
)
from unbsim.traffic import (
    TrafficTrace,
    UNB,
    INTERFERER,
    generate_interferer_traffic,
    generate_unb_traffic,
    merge_traces,
)

T_PKT = 2080.0 / 600.0


def ev(start, freq, *, dur=T_PKT, bw=600.0, kind="unb", src=0, pkt=0, rep=0, band=1):
    return TransmissionEvent(
        source_id=src, kind=kind, packet_id=pkt, rep_index=rep,
        start_time=start, duration=dur, carrier_freq=freq, band=band, bandwidth=bw,
    )


def hand_trace(columns, horizon=100.0, num_bands=3):
    """Build a TrafficTrace from (src, kind, pkt, rep, start, dur, freq, band, bw) rows."""
    cols = np.asarray(sorted(columns, key=lambda r: r[4]), dtype=float)
    return TrafficTrace(
        horizon=horizon,
        num_bands=num_bands,
        source_id=cols[:, 0].astype(np.int64),
        kind=cols[:, 1].astype(np.int8),
        packet_id=cols[:, 2].astype(np.int64),
        rep_index=cols[:, 3].astype(np.int64),
        start_time=cols[:, 4],
        duration=cols[:, 5],
        carrier_freq=cols[:, 6],
        band=cols[:, 7].astype(np.int64),
        bandwidth=cols[:, 8],
    )


class TestTimeFreqOverlap:
    def test_cochannel_concurrent(self):
        assert time_freq_overlap(ev(0.0, 100e3), ev(1.0, 100e3))

    def test_time_disjoint(self):
        assert not time_freq_overlap(ev(0.0, 100e3), ev(10.0, 100e3))

    def test_touching_time_intervals_count(self):
        # closed intervals: one ending exactly as the other starts still overlaps
        assert time_freq_overlap(ev(0.0, 100e3), ev(T_PKT, 100e3))
        assert not time_freq_overlap(ev(0.0, 100e3), ev(np.nextafter(T_PKT, 10), 100e3))

    def test_frequency_separation(self):
        a = ev(0.0, 100e3)
        assert not time_freq_overlap(a, ev(0.0, 101e3))          # 1 kHz apart, 600 Hz wide
        assert time_freq_overlap(a, ev(0.0, 100e3 + 600.0))      # edges touch exactly
        assert not time_freq_overlap(a, ev(0.0, 100e3 + 600.1))

    def test_wideband_swallows_narrowband(self):
        assert time_freq_overlap(ev(0.0, 100e3), ev(1.0, 150e3, bw=125e3, kind="interferer"))

    def test_symmetry(self):
        a, b = ev(0.0, 100e3), ev(2.0, 100.4e3, bw=1e3)
        assert time_freq_overlap(a, b) == time_freq_overlap(b, a)


class TestInterferencePower:
    def test_no_events(self):
        target = ev(0.0, 100e3)
        assert interference_power_mw(target, 0, [], np.zeros((1, 0))) == 0.0

    def test_cochannel_unb_full_power(self):
        target = ev(0.0, 100e3, src=0, pkt=0)
        other = ev(1.0, 100e3, src=1, pkt=0)
        powers = np.array([[0.0, -60.0]])
        got = interference_power_mw(target, 0, [target, other], powers)
        assert got == pytest.approx(1e-6, rel=1e-12)

    def test_wideband_leakage_fraction(self):
        # 125 kHz burst at -60 dBm over a 600 Hz victim: 1e-6 * 600/125000
        target = ev(0.0, 100e3)
        burst = ev(1.0, 100e3, bw=125e3, kind="interferer", src=0, pkt=0)
        powers = np.array([[0.0, -60.0]])
        got = interference_power_mw(target, 0, [target, burst], powers)
        assert got == pytest.approx(4.8e-9, rel=1e-12)

    def test_partial_band_clip(self):
        # interferer's lower edge cuts 100 Hz into the victim band
        target = ev(0.0, 100e3)
        burst = ev(0.0, 162.7e3, bw=125e3, kind="interferer", src=3, pkt=0)
        powers = np.array([[-60.0]])
        got = interference_power_mw(target, 0, [burst], powers)
        assert got == pytest.approx(1e-6 * 100.0 / 125e3, rel=1e-9)

    def test_own_repetitions_excluded(self):
        target = ev(0.0, 100e3, src=5, pkt=2, rep=0)
        rep1 = ev(0.5, 100.2e3, src=5, pkt=2, rep=1)
        powers = np.array([[0.0, 0.0]])
        assert interference_power_mw(target, 0, [target, rep1], powers) == 0.0

    def test_same_device_other_packet_counts(self):
        target = ev(0.0, 100e3, src=5, pkt=2)
        other = ev(0.5, 100e3, src=5, pkt=3)
        powers = np.array([[-60.0]])
        got = interference_power_mw(target, 0, [other], powers)
        assert got == pytest.approx(1e-6, rel=1e-12)

    def test_accumulates_multiple(self):
        target = ev(0.0, 100e3)
        others = [ev(1.0, 100e3, src=1), ev(2.0, 100e3, src=2)]
        powers = np.array([[-60.0, -63.0]])
        got = interference_power_mw(target, 0, others, powers)
        assert got == pytest.approx(1e-6 + 10 ** -6.3, rel=1e-12)

    def test_station_row_selects_power(self):
        target = ev(0.0, 100e3)
        other = ev(0.0, 100e3, src=1)
        powers = np.array([[-60.0], [-70.0]])
        assert interference_power_mw(target, 1, [other], powers) == pytest.approx(1e-7)


class TestSinrDb:
    def test_noise_limited(self):
        assert sinr_db(-46.0, -146.0, 0.0) == pytest.approx(100.0, abs=1e-12)

    def test_mixed_denominator(self):
        # interference equal to the noise floor halves the SINR ratio
        got = sinr_db(-46.0, -146.0, 10 ** -14.6)
        assert got == pytest.approx(100.0 - 10 * np.log10(2.0), abs=1e-12)
        assert got == pytest.approx(96.9897, abs=1e-4)

    def test_negative_interference_rejected(self):
        with pytest.raises(ValueError):
            sinr_db(-46.0, -146.0, -1e-9)


def hand_config(**overrides):
    return SimConfig(**overrides)


def single_device_setup(dist_m=1000.0, **cfg_overrides):
    cfg = hand_config(shadowing_std=0.0, fading_enabled=False, **cfg_overrides)
    topo = Topology(
        area_side=cfg.area_side,
        bs_locations=np.array([[0.0, 0.0]]),
        iot_locations=np.array([[dist_m, 0.0]]),
        interferer_locations=np.zeros((0, 2)),
        interferer_band_probs=np.zeros((0, cfg.num_bands)),
    )
    trace = hand_trace(
        [(0, UNB, 0, r, r * T_PKT, T_PKT, 100e3, 1, 600.0) for r in range(3)],
        num_bands=cfg.num_bands,
    )
    real = build_channel_realization(topo, cfg, np.random.default_rng(0))
    return cfg, trace, real


class TestDecodeTableBuild:
    def test_single_device_snr_55db(self):
        # 14 dBm - 105 dB path loss = -91 dBm over a -146 dBm floor
        cfg, trace, real = single_device_setup()
        tab = compute_sinr_table(trace, real, cfg, np.random.default_rng(1))
        expected = 14.0 + path_loss_db(3.5, 1000.0) - (-146.0)
        assert expected == pytest.approx(55.0, abs=1e-9)
        assert tab.sinr_db == pytest.approx(expected, abs=1e-9)

    def test_threshold_split(self):
        cfg, trace, real = single_device_setup()
        assert build_decode_table(trace, real, cfg, np.random.default_rng(1)).d.all()
        high = build_decode_table(trace, real, cfg, np.random.default_rng(1), tau_db=60.0)
        assert not high.d.any()

    def test_infinite_thresholds(self):
        cfg, trace, real = single_device_setup()
        always = build_decode_table(trace, real, cfg, np.random.default_rng(1), tau_db=-np.inf)
        never = build_decode_table(trace, real, cfg, np.random.default_rng(1), tau_db=np.inf)
        assert always.d.all() and not never.d.any()

    def test_threshold_monotone_in_tau(self):
        cfg, trace, real = dual_route_scenario(seed=7)
        lo = build_decode_table(trace, real, cfg, np.random.default_rng(3), tau_db=5.0)
        hi = build_decode_table(trace, real, cfg, np.random.default_rng(3), tau_db=15.0)
        assert (hi.d <= lo.d).all()

    def test_fading_changes_outcomes_but_stays_deterministic(self):
        cfg, trace, real = single_device_setup()
        cfg_f = hand_config(shadowing_std=0.0, fading_enabled=True)
        t1 = compute_sinr_table(trace, real, cfg_f, np.random.default_rng(9))
        t2 = compute_sinr_table(trace, real, cfg_f, np.random.default_rng(9))
        t3 = compute_sinr_table(trace, real, cfg_f, np.random.default_rng(10))
        np.testing.assert_array_equal(t1.sinr_db, t2.sinr_db)
        assert not np.array_equal(t1.sinr_db, t3.sinr_db)

    def test_noise_jitter(self):
        cfg, trace, real = single_device_setup()
        cfg_j = hand_config(shadowing_std=0.0, fading_enabled=False, noise_jitter_std=2.0)
        base = compute_sinr_table(trace, real, cfg, np.random.default_rng(4))
        jit = compute_sinr_table(trace, real, cfg_j, np.random.default_rng(4))
        jit2 = compute_sinr_table(trace, real, cfg_j, np.random.default_rng(4))
        np.testing.assert_array_equal(jit.sinr_db, jit2.sinr_db)
        assert not np.allclose(base.sinr_db, jit.sinr_db)

    def test_no_unb_events_gives_empty_table(self):
        cfg = hand_config(shadowing_std=0.0, fading_enabled=False)
        topo = Topology(
            area_side=cfg.area_side,
            bs_locations=np.array([[0.0, 0.0]]),
            iot_locations=np.array([[10.0, 0.0]]),
            interferer_locations=np.array([[20.0, 0.0]]),
            interferer_band_probs=np.full((1, 3), 1 / 3),
        )
        trace = hand_trace([(0, INTERFERER, 0, 0, 1.0, T_PKT, 100e3, 1, 125e3)])
        real = build_channel_realization(topo, cfg, np.random.default_rng(0))
        tab = build_decode_table(trace, real, cfg, np.random.default_rng(1))
        assert tab.num_events == 0
        with pytest.raises(ValueError):
            metrics(tab, Assignment.from_bands([1], 3))


def dual_route_scenario(seed=0, interferer_duration=1.7):
    cfg = hand_config(
        num_bs=2,
        fading_enabled=False,
        packets_per_hour=40.0,
        interferer_packets_per_hour=60.0,
        sim_horizon=300.0,
        interferer_duration=interferer_duration,
        mean_iot_count=8,
        mean_interferer_count=3,
    )
    rng = np.random.default_rng(seed)
    topo = Topology(
        area_side=cfg.area_side,
        bs_locations=rng.uniform(0, cfg.area_side, (2, 2)),
        iot_locations=rng.uniform(0, cfg.area_side, (8, 2)),
        interferer_locations=rng.uniform(0, cfg.area_side, (3, 2)),
        interferer_band_probs=np.full((3, 3), 1 / 3),
    )
    unb = generate_unb_traffic(topo, cfg, np.random.default_rng(seed + 1), horizon=300.0)
    intf = generate_interferer_traffic(topo, cfg, np.random.default_rng(seed + 2), horizon=300.0)
    trace = merge_traces(unb, intf)
    real = build_channel_realization(topo, cfg, np.random.default_rng(seed + 3))
    return cfg, trace, real


class TestVectorizedAgainstScalar:
    def test_engine_matches_reference_ops(self):
        cfg, trace, real = dual_route_scenario(seed=11)
        assert trace.num_unb_events > 40 and (trace.kind == INTERFERER).sum() > 5
        table = compute_sinr_table(trace, real, cfg, np.random.default_rng(99))

        col = trace.source_id + np.where(trace.kind == INTERFERER, real.num_iot, 0)
        tx = np.where(trace.kind == INTERFERER, cfg.tx_power_interferer, cfg.tx_power_iot)
        powers = tx[None, :] + real.pathloss_db[:, col] + real.shadowing_db[:, col]

        events = trace.events
        targets = [j for j, e in enumerate(events) if e.kind == "unb"]
        for t_pos, j in enumerate(targets):
            for b in range(real.num_bs):
                i_mw = interference_power_mw(events[j], b, events, powers)
                want = sinr_db(powers[b, j], cfg.noise_power, i_mw)
                assert table.sinr_db[b, t_pos] == pytest.approx(want, rel=1e-9), (b, j)

    def test_window_edges_inclusive(self):
        # interferer ends exactly at the target start, and another starts at its end
        cfg = hand_config(shadowing_std=0.0, fading_enabled=False, num_bs=1)
        t0 = 10.0
        rows = [
            (0, UNB, 0, 0, t0, T_PKT, 100e3, 1, 600.0),
            (1, UNB, 0, 0, t0 - T_PKT, T_PKT, 100e3, 1, 600.0),
            (2, UNB, 0, 0, t0 + T_PKT, T_PKT, 100e3, 1, 600.0),
        ]
        topo = Topology(
            area_side=cfg.area_side,
            bs_locations=np.array([[0.0, 0.0]]),
            iot_locations=np.array([[1000.0, 0.0], [2000.0, 0.0], [3000.0, 0.0]]),
            interferer_locations=np.zeros((0, 2)),
            interferer_band_probs=np.zeros((0, 3)),
        )
        trace = hand_trace(rows)
        real = build_channel_realization(topo, cfg, np.random.default_rng(0))
        tab = compute_sinr_table(trace, real, cfg, np.random.default_rng(0))
        events = trace.events
        powers = 14.0 + real.pathloss_db + real.shadowing_db
        for t_pos, e in enumerate(events):
            i_mw = interference_power_mw(e, 0, events, powers[:, trace.source_id])
            want = sinr_db(powers[0, e.source_id], cfg.noise_power, i_mw)
            assert tab.sinr_db[0, t_pos] == pytest.approx(want, rel=1e-12)
        # both touching neighbours must actually have contributed
        mid = [t for t, e in enumerate(events) if e.source_id == 0][0]
        assert tab.sinr_db[0, mid] < 54.0


def hand_table():
    return DecodeTable(
        d=np.array([[1, 0, 0], [0, 1, 0]], dtype=np.uint8),
        event_band=np.array([1, 2, 1]),
        event_packet=np.array([0, 0, 1]),
        num_bands=2,
    )


class TestMetrics:
    def test_hand_counted(self):
        tab = hand_table()
        pdp, rate = metrics(tab, Assignment.from_bands([1, 2], 2))
        assert rate == pytest.approx(2 / 3)
        assert pdp == pytest.approx(1 / 2)

    def test_all_on_one_band(self):
        tab = hand_table()
        pdp, rate = metrics(tab, Assignment.from_bands([2, 2], 2))
        assert rate == pytest.approx(1 / 3)
        assert pdp == pytest.approx(1 / 2)

    def test_packet_decoded_matches_metrics(self):
        tab = hand_table()
        x = Assignment.from_bands([1, 2], 2)
        assert packet_decoded(tab, 0, x) is True
        assert packet_decoded(tab, 1, x) is False
        with pytest.raises(ValueError):
            packet_decoded(tab, 99, x)

    def test_assignment_shape_checked(self):
        with pytest.raises(ValueError):
            metrics(hand_table(), Assignment.from_bands([1, 2, 1], 2))
        with pytest.raises(ValueError):
            metrics(hand_table(), Assignment.from_bands([1, 3], 3))

    def test_pdp_at_least_transmission_rate(self):
        # with equal repetition counts, packet-level OR can only help
        rng = np.random.default_rng(5)
        for _ in range(60):
            B, M, P, R = rng.integers(1, 4), rng.integers(1, 4), rng.integers(1, 9), rng.integers(1, 4)
            tab = DecodeTable(
                d=rng.integers(0, 2, (B, P * R)).astype(np.uint8),
                event_band=rng.integers(1, M + 1, P * R),
                event_packet=np.repeat(np.arange(P), R),
                num_bands=int(M),
            )
            x = Assignment.from_bands(rng.integers(1, M + 1, B), int(M))
            pdp, rate = metrics(tab, x)
            assert pdp >= rate - 1e-12

    def test_flip_zero_to_one_never_hurts(self):
        rng = np.random.default_rng(8)
        for _ in range(40):
            d = rng.integers(0, 2, (2, 12)).astype(np.uint8)
            zeros = np.argwhere(d == 0)
            if not len(zeros):
                continue
            b, n = zeros[rng.integers(len(zeros))]
            d2 = d.copy()
            d2[b, n] = 1
            bands = rng.integers(1, 4, 12)
            pkts = np.repeat(np.arange(4), 3)
            x = Assignment.from_bands(rng.integers(1, 4, 2), 3)
            m1 = metrics(DecodeTable(d, bands, pkts, 3), x)
            m2 = metrics(DecodeTable(d2, bands, pkts, 3), x)
            assert m2[0] >= m1[0] - 1e-12 and m2[1] >= m1[1] - 1e-12

    @given(st.data())
    @settings(max_examples=40, deadline=None)
    def test_rate_recount(self, data):
        B = data.draw(st.integers(1, 3))
        N = data.draw(st.integers(1, 10))
        M = data.draw(st.integers(1, 3))
        d = np.array(data.draw(st.lists(st.lists(st.integers(0, 1), min_size=N, max_size=N),
                                        min_size=B, max_size=B)), dtype=np.uint8)
        bands = np.array(data.draw(st.lists(st.integers(1, M), min_size=N, max_size=N)))
        pkts = np.array(data.draw(st.lists(st.integers(0, 3), min_size=N, max_size=N)))
        xb = data.draw(st.lists(st.integers(1, M), min_size=B, max_size=B))
        tab = DecodeTable(d, bands, pkts, M)
        x = Assignment.from_bands(xb, M)
        pdp, rate = metrics(tab, x)
        dec = [any(d[b, n] and bands[n] == xb[b] for b in range(B)) for n in range(N)]
        by_pkt = {}
        for n in range(N):
            by_pkt.setdefault(pkts[n], []).append(dec[n])
        assert rate == pytest.approx(np.mean(dec))
        assert pdp == pytest.approx(np.mean([any(v) for v in by_pkt.values()]))


class TestAggregates:
    def test_decode_masks(self):
        tab = hand_table()
        np.testing.assert_array_equal(tab.decode_masks, [1, 2, 0])

    def test_band_mask_counts(self):
        counts = hand_table().band_mask_counts
        assert counts.shape == (2, 4)
        assert counts[0, 1] == 1 and counts[0, 0] == 1 and counts[1, 2] == 1
        assert counts.sum() == 3

    def test_packet_band_masks(self):
        sig, counts = hand_table().packet_band_masks
        np.testing.assert_array_equal(sig, [[0, 0], [1, 2]])
        np.testing.assert_array_equal(counts, [1, 1])


class TestSerialization:
    def test_round_trip(self, tmp_path):
        cfg, trace, real = dual_route_scenario(seed=21)
        tab = build_decode_table(trace, real, cfg, np.random.default_rng(2))
        path = tmp_path / "table.txt"
        save_decode_table(tab, path)
        back = load_decode_table(path)
        np.testing.assert_array_equal(back.d, tab.d)
        np.testing.assert_array_equal(back.event_band, tab.event_band)
        np.testing.assert_array_equal(back.event_packet, tab.event_packet)
        assert back.num_bands == tab.num_bands

    def test_band_count_from_header_beats_inference(self, tmp_path):
        tab = DecodeTable(
            d=np.array([[1, 1]], dtype=np.uint8),
            event_band=np.array([1, 1]),
            event_packet=np.array([0, 1]),
            num_bands=3,
        )
        path = tmp_path / "t.txt"
        save_decode_table(tab, path)
        assert load_decode_table(path).num_bands == 3

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("# decode-table stations=1 bands=3\n")
        with pytest.raises(ValueError):
            load_decode_table(path)


class TestTableValidation:
    def test_band_out_of_range(self):
        with pytest.raises(ValueError):
            DecodeTable(np.ones((1, 1), dtype=np.uint8), np.array([4]), np.array([0]), 3)

    def test_nonbinary_rejected(self):
        with pytest.raises(ValueError):
            DecodeTable(np.full((1, 1), 2, dtype=np.uint8), np.array([1]), np.array([0]), 3)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            DecodeTable(np.ones((1, 2), dtype=np.uint8), np.array([1]), np.array([0]), 3)
