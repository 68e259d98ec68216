import random

import pytest

from dfsim.engine import (
    Channel,
    EventQueue,
    FrameMode,
    Link,
    PayloadTooLarge,
    SchedulingError,
    frame_overhead,
    link_transit,
)


def make_link(gbps=200.0, prop=0, medium="copper"):
    return Link(gbps, prop, medium, (("sw", 0, 0), ("sw", 1, 0)))


class TestEventQueue:
    def test_past_scheduling_rejected(self):
        eq = EventQueue()
        eq.schedule(100, "a")
        eq.pop()
        assert eq.now == 100
        with pytest.raises(SchedulingError):
            eq.schedule(50, "b")

    def test_fifo_tie_break(self):
        eq = EventQueue()
        eq.schedule(200, "A")
        eq.schedule(200, "B")
        assert eq.pop() == (200, "A")
        assert eq.pop() == (200, "B")

    def test_pop_order_matches_sort_oracle(self):
        # oracle: stable sort of the same (time, insertion index) list
        rng = random.Random(7)
        times = [rng.randrange(0, 10**9) for _ in range(10**6)]
        expected = [t for t, _ in sorted(zip(times, range(len(times))),
                                         key=lambda p: (p[0], p[1]))]
        eq = EventQueue()
        for i, t in enumerate(times):
            eq.schedule(t, i)
        popped = [eq.pop()[0] for _ in range(len(times))]
        assert popped == expected

    def test_clock_monotonic(self):
        rng = random.Random(3)
        eq = EventQueue()
        for _ in range(1000):
            eq.schedule(rng.randrange(0, 10**6), None)
        last = -1
        while len(eq):
            t, _ = eq.pop()
            assert t >= last
            last = t


class TestFrameOverhead:
    def test_roce_full_payload(self):
        assert frame_overhead(FrameMode.ROCE, 4096) == 4158

    def test_roce_minimum_frame(self):
        assert frame_overhead(FrameMode.ROCE, 0) == 64

    def test_enhanced_zero_payload(self):
        # 0 + 62 - 26 = 36, above the 32-byte floor
        assert frame_overhead(FrameMode.ENHANCED, 0) == 36

    def test_enhanced_full_payload(self):
        assert frame_overhead(FrameMode.ENHANCED, 4096) == 4132

    def test_oversize_payload_rejected(self):
        with pytest.raises(PayloadTooLarge):
            frame_overhead(FrameMode.ROCE, 4097)

    @pytest.mark.parametrize("mode,floor", [(FrameMode.ROCE, 64),
                                            (FrameMode.ENHANCED, 32)])
    def test_floor_respected(self, mode, floor):
        for payload in range(0, 64):
            assert frame_overhead(mode, payload) >= floor


class TestLinkTransit:
    def test_enhanced_4kib_frame_at_200g(self):
        # 4158 * 8 / 200 = 166.32
        d = link_transit(make_link(200.0, 0), 4158, FrameMode.ENHANCED)
        assert d == pytest.approx(166.32)

    def test_enhanced_64b_at_100g(self):
        d = link_transit(make_link(100.0, 0), 64, FrameMode.ENHANCED)
        assert d == pytest.approx(5.12)

    def test_propagation_is_additive_floor(self):
        rng = random.Random(11)
        for _ in range(100):
            gbps = rng.choice([50.0, 100.0, 200.0])
            frame = rng.randrange(64, 4159)
            d = link_transit(make_link(gbps, 500), frame, FrameMode.ROCE)
            assert d >= 500

    def test_roce_charges_inter_packet_gap(self):
        link = make_link(200.0, 0)
        roce = link_transit(link, 64, FrameMode.ROCE)
        enh = link_transit(link, 64, FrameMode.ENHANCED)
        assert roce - enh == pytest.approx(20 * 8 / 200.0)

    def test_below_minimum_frame_rejected(self):
        with pytest.raises(ValueError):
            link_transit(make_link(), 32, FrameMode.ROCE)


class TestChannel:
    def test_serialization_carry_has_no_drift(self):
        # 4158 B at 200 Gb/s is 166.32 ns; over N frames the integer clock
        # must match the exact product to within one tick
        ch = Channel(make_link(200.0, 0))
        n = 10_000
        total = sum(ch.serialization_ns(4158) for _ in range(n))
        assert total == int(n * 166.32)

    def test_push_respects_occupancy(self):
        ch = Channel(make_link(200.0, 0))
        s1, e1 = ch.push(0, 4158)
        s2, e2 = ch.push(10, 4158)
        assert (s1, e1) == (0, 166)
        assert s2 == e1 and e2 > e1

    def test_capacity_within_window(self):
        # bits serialized over any busy window never exceed bandwidth*window
        # by more than one frame of slack
        ch = Channel(make_link(100.0, 0))
        rng = random.Random(5)
        t = 0
        for _ in range(1000):
            t = max(t, rng.randrange(0, 10**6))
            _, t = ch.push(t, rng.randrange(64, 4159))
        window_ns = ch.free_at
        assert ch.busy_bits <= 100.0 * window_ns + 4158 * 8
