import numpy as np
import pytest

from diffmax.channel import ChannelProcess, LinkStats, sample_channel, update_stats


def off_fraction(ch, slots, link=0):
    return sum(not ch.state(t)[link] for t in range(slots)) / slots


def test_lossless_always_on():
    ch = ChannelProcess([0.0] * 4, seed=3)
    assert all(all(ch.state(t)) for t in range(3000))


def test_certain_loss_always_off():
    ch = ChannelProcess([0.0, 1.0], seed=3)
    for t in range(3000):
        on = sample_channel(ch, t)
        assert on[0] and not on[1]


@pytest.mark.parametrize("seed", [1, 2, 3, 17])
def test_empirical_loss_rate(seed):
    ch = ChannelProcess([0.3], seed=seed)
    assert abs(off_fraction(ch, 10000) - 0.3) <= 0.02


def test_state_is_function_of_seed_and_slot():
    a = ChannelProcess([0.4, 0.1, 0.7], seed=11)
    b = ChannelProcess([0.4, 0.1, 0.7], seed=11)
    slots = [9000, 5, 4100, 0, 2047, 2048]
    assert [a.state(t) for t in slots] == [b.state(t) for t in reversed(slots)][::-1]
    assert [a.state(t) for t in range(100)] != [ChannelProcess([0.4, 0.1, 0.7], 12).state(t) for t in range(100)]


def test_links_are_independent():
    ch = ChannelProcess([0.5, 0.5], seed=5)
    s = np.array([ch.state(t) for t in range(20000)])
    corr = np.corrcoef(s[:, 0], s[:, 1])[0, 1]
    assert abs(corr) < 0.03


def test_invalid_probability():
    with pytest.raises(ValueError):
        ChannelProcess([1.5], seed=1)
    with pytest.raises(ValueError):
        ChannelProcess([0.5], seed=1).state(-1)


def test_loss_estimate_ratio():
    st = LinkStats([1.0])
    for t in range(10):
        update_stats(st, 0, 1, 1 if t < 7 else 0, t)
    assert st.p_bar(0) == pytest.approx(0.3)
    assert st.r_bar(0) == 1.0


def test_defaults_without_attempts():
    st = LinkStats([1.0, 3.0])
    assert st.p_bar(1) == 0.0 and st.r_bar(1) == 3.0


def test_window_expires_old_records():
    st = LinkStats([1.0], window_len=10)
    st.record(0, 1, 0, 0)
    st.refresh(9)
    assert st.p_bar(0) == 1.0
    st.refresh(10)
    assert st.attempts[0] == 0 and st.p_bar(0) == 0.0


def test_rate_estimate_counts_packets_per_busy_slot():
    st = LinkStats([4.0])
    st.record(0, 4, 4, 0)
    st.record(0, 2, 1, 1)
    assert st.r_bar(0) == 3.0
    assert st.p_bar(0) == pytest.approx(1 / 6)


def test_rejects_more_successes_than_attempts():
    with pytest.raises(ValueError):
        LinkStats([1.0]).record(0, 1, 2, 0)


def test_estimate_tracks_stationary_loss():
    ch = ChannelProcess([0.2], seed=8)
    st = LinkStats([1.0], window_len=500)
    for t in range(20000):
        st.record(0, 1, int(ch.state(t)[0]), t)
        if t >= 1000 and t % 250 == 0:
            assert abs(st.p_bar(0) - 0.2) <= 0.05
