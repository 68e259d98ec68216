"""End-to-end congestion control: per-pair windows with fast backpressure.

Every (source, destination) endpoint pair has an injection window; packets
beyond the window wait at the NIC. A destination is congested when its
aggregate inbound outstanding bytes exceed a multiple of its access link's
bandwidth-delay product. While congested, the pairs sending to it (the
contributors) have their windows cut multiplicatively down to a one-frame
floor; every other pair is a victim and is never touched. When the
aggregate falls below three quarters of the threshold, contributors ramp
back additively. Cuts and ramps are applied at most once per tick interval
per destination, whether triggered by an ack or by the periodic tick.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class CcConfig:
    enabled: bool = True
    threshold_bdp_multiple: float = 2.0
    base_rtt_ns: int = 2000
    decrease: float = 0.5
    increase_frames: int = 1
    tick_ns: int = 2000
    default_window_frames: int = 16
    log_window_changes: bool = False


class PairState:
    __slots__ = ("outstanding_bytes", "outstanding_pkts", "window",
                 "last_rtt_ns")

    def __init__(self, window: int):
        self.outstanding_bytes = 0
        self.outstanding_pkts = 0
        self.window = window
        self.last_rtt_ns = -1


class CongestionControl:
    def __init__(self, cfg: CcConfig, max_frame_bytes: int,
                 access_link_gbps: float):
        self.cfg = cfg
        self.max_frame = max_frame_bytes
        self.default_window = cfg.default_window_frames * max_frame_bytes
        self.floor = max_frame_bytes
        bdp = access_link_gbps / 8.0 * cfg.base_rtt_ns  # bytes per base RTT
        self.threshold = cfg.threshold_bdp_multiple * bdp
        self.pairs: dict[tuple[int, int], PairState] = {}
        self.dst_outstanding: dict[int, int] = {}
        self.dst_pairs: dict[int, list[tuple[int, int]]] = {}
        self.congested: set[int] = set()
        self.last_adjust: dict[int, int] = {}
        self.dup_acks = 0
        self.window_log: list[tuple] | None = (
            [] if cfg.log_window_changes else None)

    def pair(self, src: int, dst: int) -> PairState:
        key = (src, dst)
        st = self.pairs.get(key)
        if st is None:
            st = self.pairs[key] = PairState(self.default_window)
            self.dst_pairs.setdefault(dst, []).append(key)
        return st

    # -- datapath hooks ----------------------------------------------------

    def on_inject(self, src: int, dst: int, frame_bytes: int) -> bool:
        """True to admit now, False to defer at the NIC."""
        st = self.pair(src, dst)
        if self.cfg.enabled and st.outstanding_bytes >= st.window:
            return False
        st.outstanding_bytes += frame_bytes
        st.outstanding_pkts += 1
        self.dst_outstanding[dst] = \
            self.dst_outstanding.get(dst, 0) + frame_bytes
        if self.dst_outstanding[dst] > self.threshold:
            self.congested.add(dst)
        return True

    def can_inject(self, src: int, dst: int) -> bool:
        if not self.cfg.enabled:
            return True
        st = self.pair(src, dst)
        return st.outstanding_bytes < st.window

    def on_ack(self, src: int, dst: int, frame_bytes: int, now: int,
               rtt_ns: int = -1) -> None:
        st = self.pair(src, dst)
        if st.outstanding_pkts <= 0:
            self.dup_acks += 1
            return
        st.outstanding_pkts -= 1
        st.outstanding_bytes -= frame_bytes
        if rtt_ns >= 0:
            st.last_rtt_ns = rtt_ns
        agg = self.dst_outstanding[dst] - frame_bytes
        self.dst_outstanding[dst] = agg
        if dst in self.congested and agg <= self.threshold:
            self.congested.discard(dst)

    # -- control -----------------------------------------------------------

    def classify(self, dst: int) -> tuple[set, set]:
        """(victims, contributors) pair sets for a congested destination."""
        contributors = set(self.dst_pairs.get(dst, ()))
        victims = set(self.pairs) - contributors
        return victims, contributors

    def adjust_windows(self, now: int) -> list[tuple[int, int]]:
        """Apply cuts/ramps due at this instant; returns pairs that grew."""
        if not self.cfg.enabled:
            return []
        grown: list[tuple[int, int]] = []
        for dst in sorted(self.dst_pairs):
            last = self.last_adjust.get(dst, -self.cfg.tick_ns)
            if now - last < self.cfg.tick_ns:
                continue
            agg = self.dst_outstanding.get(dst, 0)
            if dst in self.congested:
                self.last_adjust[dst] = now
                for key in self.dst_pairs[dst]:
                    st = self.pairs[key]
                    new = max(int(st.window * self.cfg.decrease), self.floor)
                    if new != st.window:
                        self._log(now, key, st.window, new)
                        st.window = new
            elif agg < 0.75 * self.threshold:
                self.last_adjust[dst] = now
                step = self.cfg.increase_frames * self.max_frame
                for key in self.dst_pairs[dst]:
                    st = self.pairs[key]
                    if st.window < self.default_window:
                        new = min(st.window + step, self.default_window)
                        self._log(now, key, st.window, new)
                        st.window = new
                        grown.append(key)
        return grown

    def _log(self, now, key, old, new):
        if self.window_log is not None:
            self.window_log.append((now, key[0], key[1], old, new))

    # -- audits ------------------------------------------------------------

    def outstanding(self, src: int, dst: int) -> int:
        st = self.pairs.get((src, dst))
        return 0 if st is None else st.outstanding_bytes
