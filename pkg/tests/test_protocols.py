import pytest

from channel_lab.core import (
    BITS_BIG, BITS_LAST_BIG, COLLISION, SILENCE, ProtocolInvariantBroken,
    derive_stream, single, validate_config,
)
from channel_lab.protocols import (
    AdaptiveStation, BackoffStation, FullSensingStation, backoff_window,
    build_interleaved_state, interleaved_schedule, round_robin_turn,
    singleton_family, state_aware_choose,
)
from channel_lab.selectors import SelectorFamily

N = 8


def adaptive_in(state, n=N, order=None, wake=0):
    st = AdaptiveStation(1, n)
    st.state = state
    if order:
        st.order = list(order)
    st.wake_round = wake
    return st


def fullsensing_in(state, n=N, sid=1, variant_k=0, order=None):
    st = FullSensingStation(sid, n, variant_k)
    st.state = state
    if order:
        st.order = list(order)
    return st


class TestAdaptiveStation:
    def test_initial_roles(self):
        stations = [AdaptiveStation(sid, 4) for sid in range(1, 5)]
        assert stations[0].state == "transmitting"
        assert stations[1].state == "listening"
        assert [st.state for st in stations[2:]] == ["idle", "idle"]
        assert [st.wake_round for st in stations[2:]] == [2, 3]

    def test_heavy_queue_turns_transmitter_big(self):
        st = adaptive_in("transmitting")
        action = st.decide(5, 3 * N + 1)
        assert action.kind == "transmit" and action.bits is BITS_BIG
        assert st.state == "big"

    def test_light_queue_transmits_plain_then_idles(self):
        st = adaptive_in("transmitting")
        action = st.decide(5, 3)
        assert action.kind == "transmit" and action.bits is None
        assert st.state == "idle"
        assert st.wake_round == 5 + N - 1

    def test_empty_queue_goes_silent(self):
        st = adaptive_in("transmitting")
        assert st.decide(5, 0).kind == "off"
        assert st.state == "idle"

    def test_listener_hearing_big_goes_idle(self):
        st = adaptive_in("listening")
        assert st.decide(5, 2).kind == "listen"
        st.observe(5, single(3, BITS_BIG), own_ack=False)
        assert st.state == "idle"
        assert st.wake_round == 5 + N  # same slot next cycle

    def test_listener_hearing_last_big_moves_list(self):
        st = adaptive_in("listening", order=[1, 2, 3, 4, 5, 6, 7, 8])
        st.observe(5, single(3, BITS_LAST_BIG), own_ack=False)
        assert st.order[0] == 3
        assert st.state == "idle"
        assert st.wake_round == 5 + N + 1  # position shifted up by the move

    def test_listener_after_the_mover_keeps_its_slot(self):
        st = adaptive_in("listening", order=[3, 1, 2, 4, 5, 6, 7, 8])
        st.observe(5, single(3, BITS_LAST_BIG), own_ack=False)
        assert st.wake_round == 5 + N

    def test_listener_takes_token_on_plain_or_silence(self):
        for obs in (single(3), SILENCE):
            st = adaptive_in("listening")
            st.observe(5, obs, own_ack=False)
            assert st.state == "transmitting"

    def test_big_demotes_only_at_cycle_end(self):
        st = adaptive_in("big")
        assert st.decide(N + 1, 3 * N).bits is BITS_BIG  # mid-cycle, stays big
        assert st.state == "big"
        action = st.decide(2 * N, 3 * N)  # cycle-closing round, queue at threshold
        assert action.bits is BITS_LAST_BIG
        assert st.state == "last_big"

    def test_last_big_hands_over_at_cycle_end(self):
        st = adaptive_in("last_big", order=[2, 3, 1, 4, 5, 6, 7, 8])
        assert st.decide(N + 3, 9).bits is BITS_LAST_BIG
        assert st.state == "last_big"
        action = st.decide(2 * N, 9)
        assert action.bits is BITS_LAST_BIG
        assert st.state == "transmitting"
        assert st.order[0] == 1  # moved itself to the front at handoff

    def test_collision_is_a_broken_invariant(self):
        st = adaptive_in("listening")
        with pytest.raises(ProtocolInvariantBroken):
            st.observe(5, COLLISION, own_ack=False)


class TestFullSensingStation:
    def test_listener_waits_through_collision(self):
        st = fullsensing_in("listening", sid=3)
        st.observe(5, COLLISION, own_ack=False)
        assert st.state == "listening"

    def test_listener_takes_token_from_predecessor(self):
        st = fullsensing_in("listening", sid=3)  # predecessor is 2
        st.observe(5, single(2), own_ack=False)
        assert st.state == "transmitting"

    def test_listener_learns_big_from_order_mismatch(self):
        st = fullsensing_in("listening", sid=3)
        st.observe(2, single(7), own_ack=False)
        assert st.order[0] == 7
        assert st.state == "idle"
        # position rose from 2 to 3; slot 3 of the next cycle is round 11
        assert st.wake_round == 11

    def test_successful_heavy_transmitter_becomes_big(self):
        st = fullsensing_in("transmitting", sid=1)
        assert st.decide(9, 3 * N + 6).kind == "transmit"
        st.observe(9, single(1), own_ack=True)
        assert st.state == "big"

    def test_successful_light_transmitter_idles(self):
        st = fullsensing_in("transmitting", sid=1)
        st.decide(9, 5)
        st.observe(9, single(1), own_ack=True)
        assert st.state == "idle"
        assert st.wake_round == 9 + N - 1

    def test_modified_variant_raises_big_threshold(self):
        st = fullsensing_in("transmitting", sid=1, variant_k=2)
        st.decide(9, 3 * N + 6)  # above 3n but below 2n + kn = 4n
        st.observe(9, single(1), own_ack=True)
        assert st.state == "idle"
        st2 = fullsensing_in("transmitting", sid=1, variant_k=2)
        st2.decide(9, 4 * N + 2)
        st2.observe(9, single(1), own_ack=True)
        assert st2.state == "big"

    def test_interrupted_transmitter_learns_and_sleeps(self):
        st = fullsensing_in("transmitting", sid=3)
        st.decide(10, 5)
        st.observe(10, COLLISION, own_ack=False)
        assert st.order[0] == 2  # predecessor identified as the big station
        assert st.state == "idle"

    def test_modified_variant_sleeps_extra_cycles(self):
        st = fullsensing_in("transmitting", sid=3, variant_k=3)
        st.decide(10, 5)
        st.observe(10, COLLISION, own_ack=False)
        base = fullsensing_in("transmitting", sid=3)
        base.decide(10, 5)
        base.observe(10, COLLISION, own_ack=False)
        assert st.wake_round == base.wake_round + (3 - 1) * N

    def test_empty_transmitter_listens_and_learns_from_big_single(self):
        st = fullsensing_in("transmitting", sid=3)
        assert st.decide(10, 0).kind == "listen"
        st.observe(10, single(2), own_ack=False)
        assert st.order[0] == 2
        assert st.state == "idle"

    def test_big_exits_at_cycle_end_below_two_n(self):
        st = fullsensing_in("big", sid=5)
        st.decide(2 * N, 2 * N + 1)  # transmits; queue after send is 2n
        st.observe(2 * N, single(5), own_ack=True)
        assert st.state == "transmitting"
        assert st.order[0] == 5
        assert st.token_from_exit

    def test_big_stays_when_queue_still_heavy(self):
        st = fullsensing_in("big", sid=5)
        st.decide(2 * N, 3 * N)
        st.observe(2 * N, single(5), own_ack=True)
        assert st.state == "big"


class TestRoundRobin:
    def test_first_round_is_station_one(self):
        assert round_robin_turn(1, 4) == 1

    def test_wraparound(self):
        assert round_robin_turn(4, 4) == 4
        assert round_robin_turn(5, 4) == 1

    def test_station_three_pattern(self):
        turns = [r for r in range(1, 17) if round_robin_turn(r, 4) == 3]
        assert turns == [3, 7, 11, 15]


class TestInterleavedSchedule:
    def make_state(self, lengths):
        fams = []
        for i, m in enumerate(lengths, start=1):
            sets = tuple((j % 8 + 1,) for j in range(m))
            fams.append(SelectorFamily(8, 2 ** i, 1, sets))
        return build_interleaved_state(8, fams)

    def test_decomposition_level_one(self):
        state = self.make_state([2, 5, 6])
        assert interleaved_schedule(7, state) == (1, 1)

    def test_first_pass_level_three(self):
        state = self.make_state([2, 5, 6])
        assert interleaved_schedule(3, state) == (3, 1)

    def test_full_period_revisits_with_advanced_index(self):
        state = self.make_state([2, 5, 6])
        # Level 1 has m=2: rounds 1, 4, 7, ... alternate its two sets.
        indices = [interleaved_schedule(t, state)[1] for t in (1, 4, 7, 10)]
        assert indices == [1, 2, 1, 2]

    def test_levels_cycle_in_order(self):
        state = self.make_state([2, 5, 6])
        levels = [interleaved_schedule(t, state)[0] for t in range(1, 10)]
        assert levels == [1, 2, 3, 1, 2, 3, 1, 2, 3]

    def test_missing_levels_fall_back_to_singletons(self):
        fam = SelectorFamily(8, 4, 2, ((1, 2), (3, 4), (5, 6), (7, 8)))
        state = build_interleaved_state(8, (fam,))
        assert state.levels == 3
        assert state.families[1] is fam  # omega = 4 is level 2
        assert state.families[0].provenance == "singletons"
        assert state.families[2].provenance == "singletons"

    def test_singleton_family_shape(self):
        fam = singleton_family(4, 2)
        assert fam.sets == ((1,), (2,), (3,), (4,))


class TestBackoffWindow:
    def test_exponential_values(self):
        assert backoff_window("exponential", 3) == 8
        assert backoff_window("exponential", 11) == 2048
        assert backoff_window("exponential", 12) == 2048

    def test_linear_and_square_values(self):
        assert backoff_window("linear", 3) == 6
        assert backoff_window("square", 3) == 18

    def test_window_zero_is_at_least_one(self):
        for kind in ("exponential", "linear", "square"):
            assert backoff_window(kind, 0) >= 1

    def test_cap_binds_everywhere(self):
        for kind in ("exponential", "linear", "square"):
            assert all(backoff_window(kind, i) <= 2048 for i in range(0, 2000))

    def test_windows_never_shrink(self):
        for kind in ("exponential", "linear", "square"):
            values = [backoff_window(kind, i) for i in range(0, 200)]
            assert values == sorted(values)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            backoff_window("cubic", 1)


class TestBackoffStation:
    def test_empty_queue_stays_off(self):
        st = BackoffStation(1, "exponential", derive_stream(0, "backoff.1"))
        assert st.decide(1, 0).kind == "off"
        assert st.slot is None

    def test_fresh_packet_transmits_in_unit_window(self):
        st = BackoffStation(1, "exponential", derive_stream(0, "backoff.1"))
        assert st.decide(1, 1).kind == "transmit"  # window(0) = 1

    def test_failure_grows_the_window(self):
        st = BackoffStation(1, "exponential", derive_stream(0, "backoff.1"))
        st.decide(1, 1)
        st.on_failure()
        assert st.attempts == 1 and st.slot is None
        action = st.decide(2, 1)
        assert st.slot in (2, 3)  # window(1) = 2
        assert action.kind == ("transmit" if st.slot == 2 else "off")

    def test_success_resets_the_counter(self):
        st = BackoffStation(1, "square", derive_stream(0, "backoff.1"))
        st.decide(1, 1)
        st.on_failure()
        st.on_failure()
        st.on_success()
        assert st.attempts == 0 and st.slot is None


class TestStateAwareChoose:
    def test_all_empty_is_none(self):
        assert state_aware_choose([0, 0, 0]) is None

    def test_tie_breaks_to_lowest_id(self):
        assert state_aware_choose([2, 5, 5]) == 2

    def test_unique_maximum(self):
        assert state_aware_choose([7, 1, 0]) == 1


class TestScheduleOracles:
    def test_round_robin_oracle_matches_turn_function(self):
        from channel_lab.protocols import RoundRobinSystem
        cfg = validate_config({"n": 4, "protocol": "round_robin", "rho": 0.5,
                               "rounds": 10, "seed": 0})
        oracle = RoundRobinSystem(cfg).schedule_oracle()
        for r in range(1, 13):
            assert oracle(r) == (round_robin_turn(r, 4),)

    def test_interleaved_oracle_matches_schedule(self, tmp_path):
        from channel_lab import selectors
        from channel_lab.protocols import InterleavedSystem
        rng = derive_stream(1, "gen")
        fam = selectors.generate_selector_random(8, 4, 2, 20, rng)
        path = tmp_path / "fam.json"
        selectors.save_family_file(path, fam)
        cfg = validate_config({"n": 8, "protocol": f"interleaved({path})",
                               "rho": 0.5, "rounds": 10, "seed": 0})
        system = InterleavedSystem(cfg)
        oracle = system.schedule_oracle()
        for t in range(1, 40):
            level, idx = interleaved_schedule(t, system.state)
            assert oracle(t) == system.state.families[level - 1].sets[idx - 1]
