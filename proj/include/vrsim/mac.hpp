#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "vrsim/event_queue.hpp"
#include "vrsim/phy.hpp"
#include "vrsim/rng.hpp"
#include "vrsim/time.hpp"
#include "vrsim/transport.hpp"

namespace vrsim {

struct MacConfig {
    int cw = 8;  // fixed contention window, backoff drawn from {0..cw-1}
    double slot_us = 9.0;
    double sifs_us = 16.0;
    double difs_us = 34.0;
    double mpdu_error_prob = 0.1;
    int retry_limit = 10;
    int rts_bytes = 20;
    int cts_bytes = 14;
    int back_bytes = 32;
    int mac_overhead_bytes = 40;  // MAC header + FCS + delimiter per MPDU
    int ampdu_max_mpdus = 64;
    double ampdu_max_airtime_ms = 4.85;
    int queue_cap_pkts = 800;  // per-node transmit queue bound; overflow drops
    double wire_delay_us = 0.0; // server-to-AP backhaul, used by the wiring

    SimTime slot_ns() const { return from_us_f(slot_us); }
    SimTime sifs_ns() const { return from_us_f(sifs_us); }
    SimTime difs_ns() const { return from_us_f(difs_us); }
    SimTime ampdu_max_airtime_ns() const { return from_ms_f(ampdu_max_airtime_ms); }
};

// One queued MPDU: a transport packet bound for a destination node.
struct Mpdu {
    StreamPacket pkt;
    int dst = 0;
    int retries = 0;
    SimTime enqueued_at = 0;

    std::int64_t air_bits(const MacConfig& cfg) const {
        return static_cast<std::int64_t>(pkt.mac_payload_bytes + cfg.mac_overhead_bytes) * 8;
    }
};

struct AmpduBatch {
    int src = 0;
    int dst = 0;
    int mcs = 0;
    std::vector<Mpdu> mpdus;
    std::int64_t total_bits = 0;
    SimTime data_airtime = 0;  // aggregate PPDU airtime including preamble
};

// Greedy head-of-queue aggregation: consecutive MPDUs sharing the head's
// destination, capped by count and by aggregate data airtime. The head MPDU
// is always taken, even when it alone exceeds the airtime cap.
inline AmpduBatch build_ampdu(const PhyConfig& phy, const MacConfig& cfg, int mcs,
                              std::deque<Mpdu>& queue) {
    if (queue.empty()) throw std::runtime_error("mac: build_ampdu on empty queue");
    AmpduBatch batch;
    batch.dst = queue.front().dst;
    batch.mcs = mcs;
    const SimTime cap = cfg.ampdu_max_airtime_ns();
    while (!queue.empty() && static_cast<int>(batch.mpdus.size()) < cfg.ampdu_max_mpdus) {
        const Mpdu& head = queue.front();
        if (head.dst != batch.dst) break;
        std::int64_t bits_if = batch.total_bits + head.air_bits(cfg);
        SimTime airtime_if = airtime_data_ns(phy, mcs, bits_if);
        if (!batch.mpdus.empty() && airtime_if > cap) break;
        batch.mpdus.push_back(head);
        batch.total_bits = bits_if;
        batch.data_airtime = airtime_if;
        queue.pop_front();
    }
    return batch;
}

struct BlockAckOutcome {
    std::vector<Mpdu> delivered;
    std::vector<Mpdu> retry;    // reinsert at queue head, order preserved
    std::vector<Mpdu> dropped;  // retry budget exhausted
};

// Per-MPDU Bernoulli error draw; control frames never fail. Failed MPDUs
// carry an incremented retry count.
inline BlockAckOutcome resolve_block_ack(const MacConfig& cfg, const AmpduBatch& batch,
                                         Rng& rng) {
    BlockAckOutcome out;
    for (const Mpdu& m : batch.mpdus) {
        if (rng.bernoulli(cfg.mpdu_error_prob)) {
            Mpdu failed = m;
            ++failed.retries;
            if (failed.retries <= cfg.retry_limit)
                out.retry.push_back(failed);
            else
                out.dropped.push_back(failed);
        } else {
            out.delivered.push_back(m);
        }
    }
    return out;
}

// Airtime bookkeeping for the shared medium. Busy intervals are clipped to
// the accounting horizon; they never overlap by construction and the audit
// fields record any violation of the aggregation caps.
struct ChannelLedger {
    SimTime busy_success = 0;
    SimTime busy_collision = 0;
    std::int64_t successes = 0;
    std::int64_t collisions = 0;
    std::int64_t batches = 0;
    std::int64_t mpdu_attempts = 0;  // MPDUs carried by completed data exchanges
    std::int64_t mpdu_failures = 0;  // of those, rejected by the block ack
    int max_batch_mpdus = 0;
    SimTime max_batch_airtime = 0;
    std::int64_t cap_violations = 0;
    std::int64_t overlap_violations = 0;
    SimTime last_busy_end = 0;

    void add_interval(SimTime start, SimTime end, SimTime horizon, bool success) {
        if (start < last_busy_end) ++overlap_violations;
        last_busy_end = end;
        SimTime clipped = std::min(end, horizon) - std::min(start, horizon);
        if (clipped <= 0) return;
        (success ? busy_success : busy_collision) += clipped;
    }

    void audit_batch(const MacConfig& cfg, const AmpduBatch& batch) {
        ++batches;
        max_batch_mpdus = std::max(max_batch_mpdus, static_cast<int>(batch.mpdus.size()));
        max_batch_airtime = std::max(max_batch_airtime, batch.data_airtime);
        bool count_ok = static_cast<int>(batch.mpdus.size()) <= cfg.ampdu_max_mpdus;
        bool airtime_ok =
            batch.data_airtime <= cfg.ampdu_max_airtime_ns() || batch.mpdus.size() == 1;
        if (!count_ok || !airtime_ok) ++cap_violations;
    }
};

// Fraction of the horizon spent transmitting or colliding.
inline double channel_utilization(const ChannelLedger& ledger, SimTime horizon) {
    if (horizon <= 0) throw std::runtime_error("mac: channel_utilization needs horizon > 0");
    return static_cast<double>(ledger.busy_success + ledger.busy_collision) /
           static_cast<double>(horizon);
}

struct MacNodeCounters {
    std::int64_t offered = 0;        // enqueue attempts
    std::int64_t accepted = 0;       // entered the queue
    std::int64_t delivered = 0;
    std::int64_t dropped_retry = 0;
    std::int64_t dropped_overflow = 0;
};

// A single DCF contender (the AP or one station) with a bounded FIFO queue.
struct MacNode {
    int id = 0;
    std::deque<Mpdu> queue;
    Rng rng;
    int backoff = 0;
    bool contending = false;
    MacNodeCounters counters;
};

// The shared 802.11 channel: fixed-window slotted backoff with RTS/CTS
// protected A-MPDU exchanges. Node 0 is the AP; stations are appended in user
// order. One exchange per win, no TXOP continuation; every channel event ends
// with all backlogged nodes redrawing a fresh backoff.
class Channel {
  public:
    using DeliverFn = std::function<void(int dst, const StreamPacket&)>;
    using DropFn = std::function<void(int src, const StreamPacket&)>;

    Channel(Kernel& kernel, const PhyConfig& phy, const MacConfig& cfg, SimTime horizon)
        : m_kernel(kernel), m_phy(phy), m_cfg(cfg), m_horizon(horizon) {
        if (cfg.cw < 1) throw std::runtime_error("mac: cw must be >= 1");
    }

    // Registers the AP (id 0); must be first.
    int add_ap(std::uint64_t master_seed) {
        if (!m_nodes.empty()) throw std::runtime_error("mac: AP must be node 0");
        return add_node(master_seed);
    }

    // Registers one station and resolves its link against the AP.
    int add_station(std::uint64_t master_seed, const LinkState& link) {
        if (m_nodes.empty()) throw std::runtime_error("mac: add the AP first");
        m_links.push_back(link);
        return add_node(master_seed);
    }

    void set_on_deliver(DeliverFn fn) { m_on_deliver = std::move(fn); }
    void set_on_drop(DropFn fn) { m_on_drop = std::move(fn); }

    // Queues one packet at `node` for `dst`; joins contention when the node
    // was idle. Enqueue on an unregistered node is a logic error.
    void enqueue(int node, int dst, const StreamPacket& pkt) {
        check_node(node);
        check_node(dst);
        MacNode& n = m_nodes[node];
        ++n.counters.offered;
        if (static_cast<int>(n.queue.size()) >= m_cfg.queue_cap_pkts) {
            ++n.counters.dropped_overflow;
            if (m_on_drop) m_on_drop(node, pkt);
            return;
        }
        n.queue.push_back(Mpdu{pkt, dst, 0, m_kernel.now()});
        ++n.counters.accepted;
        if (!n.contending) join(n);
    }

    const MacNode& node(int id) const {
        check_node(id);
        return m_nodes[id];
    }
    const LinkState& link(int user) const { return m_links.at(user); }
    const ChannelLedger& ledger() const { return m_ledger; }
    int node_count() const { return static_cast<int>(m_nodes.size()); }

    double utilization() const { return channel_utilization(m_ledger, m_horizon); }

  private:
    enum class State { idle, counting, busy };

    int add_node(std::uint64_t master_seed) {
        int id = static_cast<int>(m_nodes.size());
        MacNode n;
        n.id = id;
        n.rng = Rng(master_seed, 0x4d41'4300u + static_cast<std::uint64_t>(id));
        m_nodes.push_back(std::move(n));
        return id;
    }

    void check_node(int id) const {
        if (id < 0 || id >= static_cast<int>(m_nodes.size()))
            throw std::runtime_error("mac: node " + std::to_string(id) + " is not registered");
    }

    // MCS of the station side of an exchange (the AP always talks to or
    // listens from exactly one station per batch).
    int mcs_for(int src, int dst) const {
        int user = src == 0 ? dst - 1 : src - 1;
        if (user < 0 || user >= static_cast<int>(m_links.size()))
            throw std::runtime_error("mac: no link for exchange " + std::to_string(src) +
                                     "->" + std::to_string(dst));
        return m_links[user].mcs;
    }

    Rng& error_rng(int src, int dst) {
        return m_nodes[dst != 0 ? dst : src].rng;
    }

    void join(MacNode& n) {
        n.contending = true;
        n.backoff = static_cast<int>(n.rng.uniform(m_cfg.cw));
        m_contenders.insert(n.id);
        if (m_state == State::idle) {
            m_state = State::counting;
            schedule_tick(m_kernel.now() + m_cfg.difs_ns());
        }
        // counting: participates from the next slot; busy: redrawn at round start
    }

    void schedule_tick(SimTime at) {
        m_kernel.schedule(at, [this] { on_tick(); });
    }

    void on_tick() {
        if (m_state != State::counting) return;
        std::vector<int> winners;
        for (int id : m_contenders) {
            if (m_nodes[id].backoff == 0) winners.push_back(id);
        }
        if (winners.empty()) {
            for (int id : m_contenders) --m_nodes[id].backoff;
            schedule_tick(m_kernel.now() + m_cfg.slot_ns());
            return;
        }
        if (winners.size() == 1)
            begin_success(winners.front());
        else
            begin_collision();
    }

    void begin_success(int winner) {
        MacNode& w = m_nodes[winner];
        int dst = w.queue.front().dst;
        int mcs = mcs_for(winner, dst);
        AmpduBatch batch = build_ampdu(m_phy, m_cfg, mcs, w.queue);
        batch.src = winner;
        m_ledger.audit_batch(m_cfg, batch);

        SimTime t_rts = airtime_legacy_ns(m_phy, m_cfg.rts_bytes);
        SimTime t_cts = airtime_legacy_ns(m_phy, m_cfg.cts_bytes);
        SimTime t_back = airtime_legacy_ns(m_phy, m_cfg.back_bytes);
        SimTime busy = t_rts + t_cts + batch.data_airtime + t_back + 3 * m_cfg.sifs_ns();
        SimTime now = m_kernel.now();
        m_ledger.add_interval(now, now + busy, m_horizon, true);
        ++m_ledger.successes;
        m_state = State::busy;
        m_kernel.schedule(now + busy, [this, batch = std::move(batch)]() mutable {
            end_success(batch);
        });
    }

    void end_success(AmpduBatch& batch) {
        MacNode& w = m_nodes[batch.src];
        BlockAckOutcome out = resolve_block_ack(m_cfg, batch, error_rng(batch.src, batch.dst));
        m_ledger.mpdu_attempts += static_cast<std::int64_t>(batch.mpdus.size());
        m_ledger.mpdu_failures +=
            static_cast<std::int64_t>(out.retry.size() + out.dropped.size());
        for (auto it = out.retry.rbegin(); it != out.retry.rend(); ++it)
            w.queue.push_front(*it);
        for (const Mpdu& m : out.dropped) {
            ++w.counters.dropped_retry;
            if (m_on_drop) m_on_drop(batch.src, m.pkt);
        }
        for (const Mpdu& m : out.delivered) {
            ++w.counters.delivered;
            if (m_on_deliver) m_on_deliver(m.dst, m.pkt);
        }
        if (w.queue.empty()) {
            w.contending = false;
            m_contenders.erase(w.id);
        }
        round_start(m_kernel.now() + m_cfg.difs_ns());
    }

    // All simultaneous winners lose the round; the medium is dead for the RTS
    // airtime plus DIFS, all of it accounted as collision time.
    void begin_collision() {
        SimTime dead = airtime_legacy_ns(m_phy, m_cfg.rts_bytes) + m_cfg.difs_ns();
        SimTime now = m_kernel.now();
        m_ledger.add_interval(now, now + dead, m_horizon, false);
        ++m_ledger.collisions;
        m_state = State::busy;
        m_kernel.schedule(now + dead, [this] { round_start(m_kernel.now()); });
    }

    void round_start(SimTime first_tick_at) {
        if (m_contenders.empty()) {
            m_state = State::idle;
            return;
        }
        for (int id : m_contenders) {
            MacNode& n = m_nodes[id];
            n.backoff = static_cast<int>(n.rng.uniform(m_cfg.cw));
        }
        m_state = State::counting;
        schedule_tick(first_tick_at);
    }

    Kernel& m_kernel;
    PhyConfig m_phy;
    MacConfig m_cfg;
    SimTime m_horizon;
    std::vector<MacNode> m_nodes;
    std::vector<LinkState> m_links;
    std::set<int> m_contenders;
    State m_state = State::idle;
    ChannelLedger m_ledger;
    DeliverFn m_on_deliver;
    DropFn m_on_drop;
};

}  // namespace vrsim
