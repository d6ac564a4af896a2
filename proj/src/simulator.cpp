#include "fg/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>
#include <string>

#include "fg/error.hpp"

namespace fg {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kTimeEps = 1e-9;

const TrainingSet& empty_set() {
  static const TrainingSet empty;
  return empty;
}

bool by_id(const ObservationRecord& x, const ObservationRecord& y) { return x.obs_id < y.obs_id; }

// First record whose age at `now` does not exceed the lifetime.
TrainingSet::const_iterator fresh_begin(const TrainingSet& set, double now, double lifetime) {
  return std::partition_point(set.begin(), set.end(), [&](const ObservationRecord& r) {
    return now - r.gen_time > lifetime;
  });
}

SharedSet finalize(TrainingSet set, double now, const SystemParams& params) {
  set.erase(set.begin(), fresh_begin(set, now, params.obs_lifetime));
  const auto cap = static_cast<std::size_t>(params.capacity());
  if (set.size() > cap) set.erase(set.begin(), set.end() - static_cast<std::ptrdiff_t>(cap));
  return std::make_shared<const TrainingSet>(std::move(set));
}

}  // namespace

const TrainingSet& ModelInstance::records() const {
  return training_set ? *training_set : empty_set();
}

bool is_subset(const TrainingSet& sub, const TrainingSet& super) {
  return std::includes(super.begin(), super.end(), sub.begin(), sub.end(), by_id);
}

TrainingSet unexpired(const TrainingSet& set, double now, double lifetime) {
  return TrainingSet(fresh_begin(set, now, lifetime), set.end());
}

ModelInstance merge_instances(const std::optional<ModelInstance>& local,
                              const ModelInstance& received, double now,
                              const SystemParams& params) {
  if (local && local->model_id != received.model_id) {
    throw Error(Errc::ModelMismatch, "merging instances of different models");
  }
  const TrainingSet& a = local ? local->records() : empty_set();
  const TrainingSet& b = received.records();
  TrainingSet merged;
  merged.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(merged), by_id);
  return {received.model_id, finalize(std::move(merged), now, params)};
}

std::optional<ModelInstance> train_instance(const std::optional<ModelInstance>& local,
                                            const ObservationRecord& obs, double now,
                                            const SystemParams& params, bool subscribed) {
  if (!subscribed) throw Error(Errc::NotSubscribed, "training an unsubscribed model");
  if (local && local->model_id != obs.model_id) {
    throw Error(Errc::ModelMismatch, "observation belongs to another model");
  }
  if (now - obs.gen_time > params.obs_lifetime) return local;
  TrainingSet set = local ? local->records() : TrainingSet{};
  const auto pos = std::lower_bound(set.begin(), set.end(), obs, by_id);
  if (pos == set.end() || pos->obs_id != obs.obs_id) set.insert(pos, obs);
  return ModelInstance{obs.model_id, finalize(std::move(set), now, params)};
}

std::vector<PlanItem> plan_exchange(const ExchangeView& x, const ExchangeView& y, double now,
                                    const SystemParams& params, Rng& rng) {
  std::vector<int> common;
  std::set_intersection(x.subscriptions.begin(), x.subscriptions.end(), y.subscriptions.begin(),
                        y.subscriptions.end(), std::back_inserter(common));
  std::vector<PlanItem> plan;
  const ExchangeView* views[2] = {&x, &y};
  for (int m : common) {
    const auto mi = static_cast<std::size_t>(m);
    for (int from = 0; from < 2; ++from) {
      const auto& sender = views[from]->instances[mi];
      if (!sender) continue;
      const auto& receiver = views[1 - from]->instances[mi];
      const TrainingSet& mine = sender->records();
      const TrainingSet& theirs = receiver ? receiver->records() : empty_set();
      const auto first = fresh_begin(mine, now, params.obs_lifetime);
      if (first == mine.end()) continue;
      if (!std::includes(theirs.begin(), theirs.end(), first, mine.end(), by_id)) {
        plan.push_back({from, m});
      }
    }
  }
  rng.shuffle(std::span<PlanItem>(plan));
  return plan;
}

namespace {

struct Task {
  bool merge = false;
  ModelInstance received;
  ObservationRecord obs;
  double finish = 0.0;
};

struct Node {
  bool in_rz = false;
  ExchangeView state;
  std::deque<ModelInstance> merge_q;
  std::deque<ObservationRecord> train_q;
  std::optional<Task> task;
  double free_at = 0.0;
  int peer = -1;
};

struct Session {
  int x;
  int y;
  double setup_remaining;
  std::vector<PlanItem> plan;
  std::size_t index = 0;
  bool transferring_item = false;
  double bits_remaining = 0.0;
  ModelInstance snapshot;
};

struct ObsBuffer {
  std::vector<double> sum;
  std::vector<int> count;
};

class Simulation {
 public:
  Simulation(const SystemParams& params, std::uint64_t seed, std::size_t slots,
             const SimOptions& options)
      : p_(params),
        opt_(options),
        slots_(slots),
        mob_rng_(mix_seed(seed, 0)),
        rng_(mix_seed(seed, 1)),
        M_(params.model_count),
        buckets_(static_cast<std::size_t>(std::ceil(params.obs_lifetime / params.age_bucket - 1e-9))),
        end_time_(static_cast<double>(slots) * params.slot),
        warmup_time_(params.warmup_fraction * static_cast<double>(slots) * params.slot) {
    kin_ = initial_kinematics(p_, mob_rng_);
    nodes_.resize(kin_.size());
    for (auto& n : nodes_) n.state.instances.resize(static_cast<std::size_t>(M_));
    raw_.slot = p_.slot;
    raw_.model_count = M_;
    raw_.obs_lifetime = p_.obs_lifetime;
    raw_.age_bucket = p_.age_bucket;
    raw_.warmup_fraction = p_.warmup_fraction;
    raw_.seed = seed;
    raw_.obs_curve_sum.assign(buckets_, 0.0);
    model_holders_.assign(static_cast<std::size_t>(M_), 0);
  }

  RawMetrics run() {
    for (std::size_t s = 0; s < slots_; ++s) step(s);
    while (obs_base_ < raw_.obs_gen_time.size()) flush_oldest();
    return std::move(raw_);
  }

 private:
  void step(std::size_t s) {
    now_ = static_cast<double>(s) * p_.slot;
    t_end_ = now_ + p_.slot;
    merges_enqueued_ = 0;
    generated_ = 0;
    lost_ = 0;

    step_mobility(kin_, p_.slot, p_, mob_rng_);
    membership();
    generate();
    connections();
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].in_rz) serve(static_cast<int>(i));
    }
    if (opt_.check_invariants) check();
    sample();
  }

  // Holder counts follow every change of a training set.
  void replace_set(int model, std::optional<ModelInstance>& slot_ref,
                   std::optional<ModelInstance> next) {
    const TrainingSet& old_set = slot_ref ? slot_ref->records() : empty_set();
    const TrainingSet& new_set = next ? next->records() : empty_set();
    auto i = old_set.begin();
    auto j = new_set.begin();
    while (i != old_set.end() || j != new_set.end()) {
      if (j == new_set.end() || (i != old_set.end() && i->obs_id < j->obs_id)) {
        --obs_holders_[i->obs_id];
        ++i;
      } else if (i == old_set.end() || j->obs_id < i->obs_id) {
        ++obs_holders_[j->obs_id];
        ++j;
      } else {
        ++i;
        ++j;
      }
    }
    (void)model;
    slot_ref = std::move(next);
  }

  void release(int i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.peer < 0) return;
    const int lo = std::min(i, n.peer);
    sessions_.erase(lo);
    nodes_[static_cast<std::size_t>(n.peer)].peer = -1;
    n.peer = -1;
  }

  void membership() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      Node& n = nodes_[i];
      const bool inside = inside_rz(kin_[i].position, p_);
      if (n.in_rz && !inside) {
        release(static_cast<int>(i));
        for (int m = 0; m < M_; ++m) {
          replace_set(m, n.state.instances[static_cast<std::size_t>(m)], std::nullopt);
        }
        n.merge_q.clear();
        n.train_q.clear();
        n.task.reset();
        n.state.subscriptions.clear();
        n.free_at = now_;
        n.in_rz = false;
      } else if (!n.in_rz && inside) {
        const int count = p_.models_per_node();
        std::vector<int> all(static_cast<std::size_t>(M_));
        for (int m = 0; m < M_; ++m) all[static_cast<std::size_t>(m)] = m;
        for (int k = 0; k < count; ++k) {
          const auto j = static_cast<std::size_t>(k) + rng_.below(static_cast<std::uint64_t>(M_ - k));
          std::swap(all[static_cast<std::size_t>(k)], all[j]);
        }
        n.state.subscriptions.assign(all.begin(), all.begin() + count);
        std::sort(n.state.subscriptions.begin(), n.state.subscriptions.end());
        n.free_at = now_;
        n.in_rz = true;
      }
    }
  }

  void generate() {
    const double mean = p_.obs_rate * p_.slot;
    for (int m = 0; m < M_; ++m) {
      const auto events = rng_.poisson(mean);
      if (events == 0) continue;
      std::vector<int> eligible;
      for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const auto& subs = nodes_[i].state.subscriptions;
        if (nodes_[i].in_rz && std::binary_search(subs.begin(), subs.end(), m)) {
          eligible.push_back(static_cast<int>(i));
        }
      }
      for (std::uint64_t e = 0; e < events; ++e) {
        ObservationRecord rec{next_id_++, m, now_};
        raw_.obs_gen_time.push_back(now_);
        raw_.obs_model.push_back(m);
        raw_.obs_first_trained.push_back(kNaN);
        obs_holders_.push_back(0);
        buffers_.push_back({std::vector<double>(buckets_, 0.0), std::vector<int>(buckets_, 0)});
        ++generated_;
        if (eligible.empty()) {
          ++lost_;
          continue;
        }
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(p_.recorders),
                                                    eligible.size());
        for (std::size_t j = 0; j < k; ++j) {
          const auto pick = j + rng_.below(eligible.size() - j);
          std::swap(eligible[j], eligible[pick]);
          nodes_[static_cast<std::size_t>(eligible[j])].train_q.push_back(rec);
        }
      }
    }
  }

  void connections() {
    std::vector<Vec2> positions(kin_.size());
    for (std::size_t i = 0; i < kin_.size(); ++i) positions[i] = kin_[i].position;
    const auto contacts = detect_contacts(positions, p_.tx_range);

    // A lost contact aborts the session and discards the in-flight item.
    for (auto it = sessions_.begin(); it != sessions_.end();) {
      const ContactPair key{static_cast<std::uint32_t>(it->second.x),
                            static_cast<std::uint32_t>(it->second.y)};
      if (!std::binary_search(contacts.begin(), contacts.end(), key)) {
        nodes_[static_cast<std::size_t>(it->second.x)].peer = -1;
        nodes_[static_cast<std::size_t>(it->second.y)].peer = -1;
        it = sessions_.erase(it);
      } else {
        ++it;
      }
    }
    for (auto it = exchanged_.begin(); it != exchanged_.end();) {
      it = std::binary_search(contacts.begin(), contacts.end(), *it) ? std::next(it)
                                                                     : exchanged_.erase(it);
    }

    std::vector<ContactPair> candidates;
    for (const auto& c : contacts) {
      const Node& a = nodes_[c.first];
      const Node& b = nodes_[c.second];
      if (a.in_rz && b.in_rz && a.peer < 0 && b.peer < 0 && !exchanged_.contains(c)) {
        candidates.push_back(c);
      }
    }
    rng_.shuffle(std::span<ContactPair>(candidates));
    for (const auto& c : candidates) {
      Node& a = nodes_[c.first];
      Node& b = nodes_[c.second];
      if (a.peer >= 0 || b.peer >= 0) continue;
      auto plan = plan_exchange(a.state, b.state, now_, p_, rng_);
      if (plan.empty()) continue;
      const int x = static_cast<int>(c.first);
      const int y = static_cast<int>(c.second);
      a.peer = y;
      b.peer = x;
      Session session;
      session.x = x;
      session.y = y;
      session.setup_remaining = p_.t0;
      session.plan = std::move(plan);
      sessions_.emplace(x, std::move(session));
    }

    for (auto it = sessions_.begin(); it != sessions_.end();) {
      if (advance(it->second)) {
        Session& ses = it->second;
        nodes_[static_cast<std::size_t>(ses.x)].peer = -1;
        nodes_[static_cast<std::size_t>(ses.y)].peer = -1;
        exchanged_.insert({static_cast<std::uint32_t>(ses.x), static_cast<std::uint32_t>(ses.y)});
        it = sessions_.erase(it);
      } else {
        ++it;
      }
    }
  }

  // Spends one slot of link time; true when the plan is finished.
  bool advance(Session& ses) {
    double budget = p_.slot;
    if (ses.setup_remaining > 0.0) {
      const double use = std::min(budget, ses.setup_remaining);
      ses.setup_remaining -= use;
      budget -= use;
      if (ses.setup_remaining > kTimeEps) return false;
      ses.setup_remaining = 0.0;
    }
    while (ses.index < ses.plan.size()) {
      const PlanItem item = ses.plan[ses.index];
      const int from = item.from == 0 ? ses.x : ses.y;
      const int to = item.from == 0 ? ses.y : ses.x;
      const auto mi = static_cast<std::size_t>(item.model_id);
      if (!ses.transferring_item) {
        const auto& inst = nodes_[static_cast<std::size_t>(from)].state.instances[mi];
        if (!inst) {
          ++ses.index;
          continue;
        }
        const TrainingSet& recs = inst->records();
        const auto first = fresh_begin(recs, now_, p_.obs_lifetime);
        if (first == recs.end()) {
          ++ses.index;
          continue;
        }
        ses.snapshot.model_id = item.model_id;
        ses.snapshot.training_set = first == recs.begin()
                                        ? inst->training_set
                                        : std::make_shared<const TrainingSet>(first, recs.end());
        ses.bits_remaining = p_.model_size;
        ses.transferring_item = true;
      }
      if (budget <= kTimeEps) return false;
      const double needed = ses.bits_remaining / p_.channel_rate;
      if (needed > budget + kTimeEps) {
        ses.bits_remaining -= budget * p_.channel_rate;
        return false;
      }
      budget -= needed;
      deliver(to, ses.snapshot);
      ses.transferring_item = false;
      ses.snapshot = {};
      ++ses.index;
    }
    return true;
  }

  void deliver(int to, const ModelInstance& inst) {
    Node& n = nodes_[static_cast<std::size_t>(to)];
    const auto& local = n.state.instances[static_cast<std::size_t>(inst.model_id)];
    const TrainingSet& mine = local ? local->records() : empty_set();
    if (is_subset(inst.records(), mine)) return;
    n.merge_q.push_back(inst);
    ++merges_enqueued_;
  }

  void serve(int i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    while (true) {
      if (n.task) {
        if (n.task->finish > t_end_ + kTimeEps) break;
        complete(n);
        continue;
      }
      const double start = std::max(n.free_at, now_);
      if (start >= t_end_ - kTimeEps) break;
      if (!n.merge_q.empty()) {
        n.task = Task{true, std::move(n.merge_q.front()), {}, start + p_.merge_time};
        n.merge_q.pop_front();
      } else if (!n.train_q.empty()) {
        if (opt_.check_invariants && !n.merge_q.empty()) {
          throw std::logic_error("training started with merges queued");
        }
        n.task = Task{false, {}, n.train_q.front(), start + p_.train_time};
        n.train_q.pop_front();
      } else {
        break;
      }
    }
  }

  void complete(Node& n) {
    Task task = std::move(*n.task);
    n.task.reset();
    n.free_at = task.finish;
    if (task.merge) {
      auto& slot_ref = n.state.instances[static_cast<std::size_t>(task.received.model_id)];
      auto merged = merge_instances(slot_ref, task.received, task.finish, p_);
      if (opt_.check_invariants) check_contents(merged, task.finish);
      replace_set(task.received.model_id, slot_ref, std::move(merged));
      return;
    }
    const auto& subs = n.state.subscriptions;
    const bool subscribed = std::binary_search(subs.begin(), subs.end(), task.obs.model_id);
    auto& slot_ref = n.state.instances[static_cast<std::size_t>(task.obs.model_id)];
    auto trained = train_instance(slot_ref, task.obs, task.finish, p_, subscribed);
    const bool changed = trained && (!slot_ref || trained->training_set != slot_ref->training_set);
    if (opt_.check_invariants && changed) check_contents(*trained, task.finish);
    replace_set(task.obs.model_id, slot_ref, std::move(trained));
    auto& first = raw_.obs_first_trained[task.obs.obs_id];
    if (std::isnan(first) && obs_holders_[task.obs.obs_id] > 0) first = task.finish;
  }

  void check_contents(const ModelInstance& inst, double at) const {
    const auto& recs = inst.records();
    if (recs.size() > static_cast<std::size_t>(p_.capacity())) {
      throw std::logic_error("training set exceeds capacity");
    }
    for (const auto& r : recs) {
      if (at - r.gen_time > p_.obs_lifetime + kTimeEps) {
        throw std::logic_error("expired record kept after service");
      }
    }
  }

  void check() const {
    int busy = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& n = nodes_[i];
      if (!n.in_rz) {
        const bool holds = std::any_of(n.state.instances.begin(), n.state.instances.end(),
                                       [](const auto& x) { return x.has_value(); });
        if (holds || !n.merge_q.empty() || !n.train_q.empty() || n.task || n.peer >= 0) {
          throw std::logic_error("node outside the RZ keeps state");
        }
      }
      if (n.peer >= 0) {
        ++busy;
        const Node& other = nodes_[static_cast<std::size_t>(n.peer)];
        if (other.peer != static_cast<int>(i)) throw std::logic_error("unpaired link");
        if (!sessions_.contains(std::min(static_cast<int>(i), n.peer))) {
          throw std::logic_error("link without session");
        }
      }
      for (int m = 0; m < M_; ++m) {
        const auto& inst = n.state.instances[static_cast<std::size_t>(m)];
        if (!inst) continue;
        const auto& subs = n.state.subscriptions;
        if (!std::binary_search(subs.begin(), subs.end(), m)) {
          throw std::logic_error("instance of an unsubscribed model");
        }
        if (inst->size() > static_cast<std::size_t>(p_.capacity())) {
          throw std::logic_error("training set exceeds capacity");
        }
      }
    }
    if (busy != 2 * static_cast<int>(sessions_.size())) {
      throw std::logic_error("busy nodes do not form disjoint pairs");
    }
  }

  void flush_oldest() {
    const std::size_t id = obs_base_;
    const ObsBuffer& buf = buffers_.front();
    const double gen = raw_.obs_gen_time[id];
    const bool included = !std::isnan(raw_.obs_first_trained[id]) && gen >= warmup_time_ &&
                          gen + p_.obs_lifetime <= end_time_ + kTimeEps;
    if (included) {
      for (std::size_t k = 0; k < buckets_; ++k) {
        if (buf.count[k] > 0) raw_.obs_curve_sum[k] += buf.sum[k] / buf.count[k];
      }
      ++raw_.obs_curve_count;
    }
    buffers_.pop_front();
    ++obs_base_;
  }

  void sample() {
    int in_rz = 0;
    int busy = 0;
    int mq = 0;
    int tq = 0;
    double fresh = 0.0;
    double stale_sum = 0.0;
    int stale_n = 0;
    std::fill(model_holders_.begin(), model_holders_.end(), 0);
    for (const Node& n : nodes_) {
      if (!n.in_rz) continue;
      ++in_rz;
      if (n.peer >= 0) ++busy;
      mq += static_cast<int>(n.merge_q.size());
      tq += static_cast<int>(n.train_q.size());
      for (int m = 0; m < M_; ++m) {
        const auto& inst = n.state.instances[static_cast<std::size_t>(m)];
        if (!inst) continue;
        ++model_holders_[static_cast<std::size_t>(m)];
        const auto& recs = inst->records();
        fresh += static_cast<double>(recs.end() - fresh_begin(recs, t_end_, p_.obs_lifetime));
        if (!recs.empty()) {
          stale_sum += t_end_ - recs.back().gen_time;
          ++stale_n;
        }
      }
    }
    raw_.time.push_back(t_end_);
    raw_.in_rz.push_back(in_rz);
    raw_.busy.push_back(busy);
    raw_.merge_queue.push_back(mq);
    raw_.train_queue.push_back(tq);
    raw_.merges_enqueued.push_back(merges_enqueued_);
    raw_.holders.insert(raw_.holders.end(), model_holders_.begin(), model_holders_.end());
    raw_.stored_fresh.push_back(fresh);
    raw_.staleness_sum.push_back(stale_sum);
    raw_.staleness_n.push_back(stale_n);
    raw_.generated.push_back(generated_);
    raw_.lost.push_back(lost_);

    while (obs_base_ < raw_.obs_gen_time.size() &&
           t_end_ - raw_.obs_gen_time[obs_base_] > p_.obs_lifetime + kTimeEps) {
      flush_oldest();
    }
    for (std::size_t id = obs_base_; id < raw_.obs_gen_time.size(); ++id) {
      const double age = t_end_ - raw_.obs_gen_time[id];
      const auto bucket = std::min(static_cast<std::size_t>(age / p_.age_bucket), buckets_ - 1);
      const int holders_m = model_holders_[static_cast<std::size_t>(raw_.obs_model[id])];
      const double value =
          holders_m > 0 ? static_cast<double>(obs_holders_[id]) / holders_m : 0.0;
      ObsBuffer& buf = buffers_[id - obs_base_];
      buf.sum[bucket] += value;
      ++buf.count[bucket];
    }
  }

  const SystemParams& p_;
  SimOptions opt_;
  std::size_t slots_;
  Rng mob_rng_;
  Rng rng_;
  int M_;
  std::size_t buckets_;
  double end_time_;
  double warmup_time_;

  std::vector<NodeKinematics> kin_;
  std::vector<Node> nodes_;
  std::map<int, Session> sessions_;  // keyed by the lower node id
  std::set<ContactPair> exchanged_;  // pairs done for the current contact
  std::vector<int> obs_holders_;
  std::deque<ObsBuffer> buffers_;    // alive observations from obs_base_
  std::size_t obs_base_ = 0;
  std::uint64_t next_id_ = 0;
  std::vector<int> model_holders_;

  double now_ = 0.0;
  double t_end_ = 0.0;
  int merges_enqueued_ = 0;
  int generated_ = 0;
  int lost_ = 0;
  RawMetrics raw_;
};

}  // namespace

RawMetrics run_simulation(const SystemParams& params, std::uint64_t seed,
                          std::size_t duration_slots, const SimOptions& options) {
  Simulation sim(params, seed, duration_slots, options);
  return sim.run();
}

}  // namespace fg
