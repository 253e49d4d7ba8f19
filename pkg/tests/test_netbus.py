import json

import numpy as np
import pytest

from risdsca import dsca
from risdsca.channel import generate_channels
from risdsca.netbus import (
    COMPLEX_BYTES,
    HEADER_BYTES,
    REAL_BYTES,
    FaultyBus,
    MessageBus,
    PriceMessage,
    ProtocolError,
    dump_message_log,
    message_bytes,
    overhead_report,
    round_exchange,
)
from risdsca.rate_model import _cache, phi_gradients, power_prices
from risdsca.scenario import default_scenario


@pytest.fixture(scope="module")
def setup():
    cfg = default_scenario(3, M=4, K=8)
    ch = generate_channels(cfg)
    state, _ = dsca.initial_state(cfg)
    return cfg, ch, state


def test_two_users_one_message_each():
    cfg = default_scenario(2, M=2, K=4)
    ch = generate_channels(cfg)
    state, _ = dsca.initial_state(cfg)
    inboxes = round_exchange(MessageBus(2), state, ch, cfg.sigma_sq, 0)
    assert [len(inboxes[q].prices) for q in range(2)] == [1, 1]
    assert inboxes[0].prices[0].from_user == 1


def test_empty_neighbors_only_mui(setup):
    cfg, ch, state = setup
    bus = MessageBus(cfg.Q, neighbors={q: set() for q in range(cfg.Q)})
    inboxes = round_exchange(bus, state, ch, cfg.sigma_sq, 0)
    for q, box in inboxes.items():
        assert box.prices == []
        power, phi = box.aggregate(cfg.K, cfg.M)
        assert not power.any() and not phi.any()
        np.testing.assert_array_equal(box.mui.mui, _cache(state, ch, cfg.sigma_sq)[2][q])


def test_aggregates_equal_direct_gradients(setup):
    cfg, ch, state = setup
    inboxes = round_exchange(MessageBus(cfg.Q), state, ch, cfg.sigma_sq, 0)
    for q in range(cfg.Q):
        power, phi = inboxes[q].aggregate(cfg.K, cfg.M)
        assert np.max(np.abs(power - power_prices(q, state, ch, cfg.sigma_sq))) <= 1e-12 * np.max(np.abs(power))
        assert np.array_equal(phi, phi_gradients(q, state, ch, cfg.sigma_sq)[1])


def test_message_size_counting():
    assert message_bytes(16, 50) - HEADER_BYTES == 16 * REAL_BYTES + 800 * COMPLEX_BYTES
    assert (message_bytes(16, 100) - message_bytes(16, 0)) == 2 * (message_bytes(16, 50) - message_bytes(16, 0))
    msg = PriceMessage(0, 1, 0, np.zeros(16), np.zeros((16, 50), complex))
    assert msg.nbytes == message_bytes(16, 50)


def test_single_user_zero_bytes():
    cfg = default_scenario(2, M=2, K=4).with_users(1)
    ch = generate_channels(cfg)
    state, _ = dsca.initial_state(cfg)
    bus = MessageBus(1)
    round_exchange(bus, state, ch, cfg.sigma_sq, 0)
    assert overhead_report(bus.log)["total_bytes"] == 0


def test_overhead_report(setup):
    cfg, ch, state = setup
    bus = MessageBus(cfg.Q)
    for t in range(3):
        round_exchange(bus, state, ch, cfg.sigma_sq, t)
    rep = overhead_report(bus.log)
    per_round = cfg.Q * (cfg.Q - 1) * message_bytes(cfg.K, cfg.M)
    assert rep["rounds"] == 3 and rep["bytes_per_round"] == [per_round] * 3
    assert rep["total_bytes"] == 3 * per_round and rep["messages_per_round"] == [6, 6, 6]


def test_self_message_rejected():
    with pytest.raises(ValueError):
        PriceMessage(1, 1, 0, np.zeros(2), np.zeros((2, 1), complex))


def test_invalid_neighbors_rejected():
    with pytest.raises(ValueError):
        MessageBus(2, neighbors={0: {0}})
    with pytest.raises(ValueError):
        MessageBus(2, neighbors={0: {5}})


def _msg(j, q, t):
    return PriceMessage(j, q, t, np.zeros(2), np.zeros((2, 1), complex))


def test_barrier_detects_missing_duplicate_and_stale():
    bus = MessageBus(2)
    bus.post(_msg(0, 1, 0))
    with pytest.raises(ProtocolError, match="missing"):
        bus.deliver(0)
    bus.post(_msg(0, 1, 1))
    bus.post(_msg(0, 1, 1))
    bus.post(_msg(1, 0, 1))
    with pytest.raises(ProtocolError, match="duplicate"):
        bus.deliver(1)
    bus.post(_msg(0, 1, 1))
    bus.post(_msg(1, 0, 1))
    with pytest.raises(ProtocolError, match="round"):
        bus.deliver(2)


def test_faulty_bus_drops_break_the_barrier(setup):
    cfg, ch, state = setup
    bus = FaultyBus(cfg.Q, drop_prob=1.0)
    with pytest.raises(ProtocolError):
        round_exchange(bus, state, ch, cfg.sigma_sq, 0)


def test_faulty_bus_stale_delivery(setup):
    cfg, ch, state = setup
    bus = FaultyBus(cfg.Q, stale=True)
    round_exchange(bus, state, ch, cfg.sigma_sq, 0)
    boxes = round_exchange(bus, state, ch, cfg.sigma_sq, 1)
    assert all(m.t == 0 for box in boxes.values() for m in box.prices)


def test_dump_log(tmp_path, setup):
    cfg, ch, state = setup
    bus = MessageBus(cfg.Q)
    round_exchange(bus, state, ch, cfg.sigma_sq, 0)
    path = tmp_path / "log.jsonl"
    dump_message_log(bus.log, path)
    lines = path.read_text().splitlines()
    entry = json.loads(lines[0])
    assert len(lines) == 1 and entry["t"] == 0 and len(entry["messages"]) == 6
    assert entry["messages"][0] == {"bytes": message_bytes(cfg.K, cfg.M), "from": 0, "sent_t": 0, "to": 1}
