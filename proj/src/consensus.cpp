#include "socialfl/consensus.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "socialfl/codec.hpp"
#include "socialfl/hash.hpp"
#include "socialfl/rng.hpp"

namespace socialfl::consensus {

std::uint32_t soft_stage(std::size_t attempt) {
  return static_cast<std::uint32_t>(1 + 2 * attempt);
}

std::uint32_t cert_stage(std::size_t attempt) {
  return static_cast<std::uint32_t>(2 + 2 * attempt);
}

std::vector<std::uint8_t> vote_signing_bytes(const Vote& vote) {
  ByteWriter w;
  w.put_string("consensus.vote");
  w.put_u32(vote.validator);
  w.put_u64(vote.height);
  w.put_u32(vote.stage);
  w.put_digest(vote.block_hash);
  return w.take();
}

Vote make_vote(NodeId validator, std::uint64_t height, std::uint32_t stage,
               const Digest& block_hash, const KeyRegistry& keys) {
  Vote vote{validator, height, stage, block_hash, kNullDigest};
  vote.signature = keys.sign(validator, vote_signing_bytes(vote));
  return vote;
}

bool verify_vote(const Vote& vote, const KeyRegistry& keys) {
  return keys.verify(vote.validator, vote_signing_bytes(vote), vote.signature);
}

std::vector<std::uint8_t> cvscript_bytes(const CVScript& script) {
  ByteWriter w;
  w.put_u64(script.height);
  w.put_u32(static_cast<std::uint32_t>(script.votes.size()));
  for (const Vote& v : script.votes) {
    w.put_u32(v.validator);
    w.put_u64(v.height);
    w.put_u32(v.stage);
    w.put_digest(v.block_hash);
    w.put_digest(v.signature);
  }
  w.put_digest(script.finalized_hash);
  return w.take();
}

CVScript cvscript_from_bytes(std::span<const std::uint8_t> data) {
  ByteReader r(data);
  CVScript script;
  script.height = r.get_u64();
  auto n = r.get_u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    Vote v;
    v.validator = r.get_u32();
    v.height = r.get_u64();
    v.stage = r.get_u32();
    v.block_hash = r.get_digest();
    v.signature = r.get_digest();
    script.votes.push_back(v);
  }
  script.finalized_hash = r.get_digest();
  r.expect_end();
  return script;
}

double vrf_value(const KeyRegistry::Secret& secret, const Digest& seed,
                 std::uint32_t stage) {
  ByteWriter w;
  for (auto b : secret) w.put_u8(b);
  w.put_digest(seed);
  w.put_u32(stage);
  Digest d = sha256(w.bytes());
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(d.bytes[i]) << (8 * i);
  return static_cast<double>(v >> 11) * 0x1.0p-53;
}

std::vector<CommitteeMember> sortition_elect(const std::vector<FullNode>& nodes,
                                             const KeyRegistry& keys,
                                             const Digest& seed,
                                             std::uint32_t stage,
                                             const SortitionParams& params) {
  double total = 0.0;
  for (const auto& node : nodes) total += node.reputation;
  if (!(total > 0.0))
    throw NoElectableNodesError("sortition: all reputations are zero");

  std::vector<CommitteeMember> committee;
  std::optional<CommitteeMember> fallback;
  for (const auto& node : nodes) {
    if (!(node.reputation > 0.0)) continue;
    double vrf = vrf_value(keys.secret_of(node.id), seed, stage);
    double threshold = params.expected_committee * node.reputation / total;
    if (vrf < threshold) committee.push_back({node.id, vrf});
    if (!fallback || vrf < fallback->priority) fallback = {node.id, vrf};
  }
  if (committee.empty() && fallback) committee.push_back(*fallback);
  return committee;  // nodes iterated in ascending id order
}

bool sortition_verify(NodeId id, const std::vector<FullNode>& nodes,
                      const KeyRegistry& keys, const Digest& seed,
                      std::uint32_t stage, const SortitionParams& params) {
  auto committee = sortition_elect(nodes, keys, seed, stage, params);
  return std::any_of(committee.begin(), committee.end(),
                     [&](const CommitteeMember& m) { return m.id == id; });
}

namespace {

bool tx_pointers_resolve(const Transaction& tx, const OffchainStore& store) {
  auto resolves = [&](const Digest& ptr) {
    return ptr.is_zero() ||
           (store.contains(ptr) && sha256(store.get(ptr)) == ptr);
  };
  if (const auto* tr = std::get_if<ledger::TrTx>(&tx))
    return resolves(tr->initial_model_ptr);
  if (const auto* sa = std::get_if<ledger::SaTx>(&tx))
    return resolves(sa->aggregate_ptr);
  if (const auto* ga = std::get_if<ledger::GaTx>(&tx))
    return resolves(ga->global_ptr);
  return resolves(std::get<ledger::PvTx>(tx).verdict_ptr);
}

Digest fabricated_hash(std::uint64_t height, std::uint32_t stage, NodeId id) {
  ByteWriter w;
  w.put_string("consensus.fabricated");
  w.put_u64(height);
  w.put_u32(stage);
  w.put_u32(id);
  return sha256(w.bytes());
}

}  // namespace

MABlock propose_candidate(const FullNode& validator,
                          const std::vector<Transaction>& mempool,
                          const MABlock& chain_tip, const OffchainStore& store,
                          const KeyRegistry& keys, TaskId task_id,
                          const Digest& cvscript_ptr) {
  std::vector<Transaction> valid;
  Digest global_ptr = kNullDigest;
  for (const auto& tx : mempool) {
    if (!ledger::verify_tx(tx, keys) || !tx_pointers_resolve(tx, store))
      continue;
    if (const auto* ga = std::get_if<ledger::GaTx>(&tx))
      global_ptr = ga->global_ptr;
    valid.push_back(tx);
  }
  MABlock block = ledger::build_block(chain_tip.header.height + 1, chain_tip,
                                      std::move(valid), task_id, global_ptr,
                                      cvscript_ptr, keys);
  if (validator.profile == ByzantineProfile::invalid_proposer)
    block.header.tx_merkle_root.bytes[0] ^= 0xff;
  return block;
}

VoteOutcome run_multistage_vote(const std::vector<FullNode>& nodes,
                                const KeyRegistry& keys,
                                const std::vector<Candidate>& candidates,
                                const Digest& seed,
                                const SortitionParams& params,
                                std::uint64_t height, const MABlock& chain_tip,
                                const OffchainStore& store,
                                std::uint64_t master_seed,
                                std::size_t committee0_size) {
  VoteOutcome outcome;
  outcome.script.height = height;
  outcome.committee_sizes.push_back(committee0_size);

  // Stage 0: among candidates whose blocks validate, the proposer with the
  // lowest priority leads.  Validation is deterministic against the shared
  // tip and store, so every honest node discards the same invalid proposals
  // and lands on the same leader; an invalid proposer costs its author
  // reputation, never the height.
  const Candidate* leader = nullptr;
  for (const auto& c : candidates) {
    if (!ledger::validate_block(c.block, chain_tip, store, keys).ok())
      continue;
    if (!leader || c.proposer.priority < leader->proposer.priority ||
        (c.proposer.priority == leader->proposer.priority &&
         c.proposer.id < leader->proposer.id))
      leader = &c;
  }
  Digest leader_hash = leader ? ledger::block_hash(leader->block) : kNullDigest;
  bool leader_valid = leader != nullptr;

  std::map<NodeId, ByzantineProfile> profile;
  for (const auto& node : nodes) profile[node.id] = node.profile;

  // Per-receiver delivery of one stage's votes.  Equivocators sign two
  // conflicting votes; each receiver sees one of them by a seeded coin.
  struct StageVotes {
    // vote list as seen by a given receiver
    std::map<NodeId, std::vector<const Vote*>> views;
    std::vector<Vote> storage;
  };
  auto run_stage = [&](std::uint32_t stage,
                       auto&& choose_vote) -> std::shared_ptr<StageVotes> {
    auto committee = sortition_elect(nodes, keys, seed, stage, params);
    outcome.committee_sizes.push_back(committee.size());
    auto sv = std::make_shared<StageVotes>();
    sv->storage.reserve(committee.size() * 2);
    struct Delivery {
      std::size_t index;
      bool split = false;
      std::size_t alt_index = 0;
      NodeId caster = 0;
    };
    std::vector<Delivery> deliveries;
    for (const auto& member : committee) {
      ByzantineProfile p = profile.at(member.id);
      if (p == ByzantineProfile::silent) continue;
      if (p == ByzantineProfile::equivocator) {
        Digest a = leader ? leader_hash
                          : fabricated_hash(height, stage, member.id);
        sv->storage.push_back(make_vote(member.id, height, stage, a, keys));
        sv->storage.push_back(
            make_vote(member.id, height, stage, kNullDigest, keys));
        deliveries.push_back({sv->storage.size() - 2, true,
                              sv->storage.size() - 1, member.id});
      } else {
        Digest h = choose_vote(member.id);
        sv->storage.push_back(make_vote(member.id, height, stage, h, keys));
        deliveries.push_back({sv->storage.size() - 1, false, 0, member.id});
      }
    }
    for (const auto& node : nodes) {
      auto& view = sv->views[node.id];
      for (const auto& d : deliveries) {
        if (!d.split) {
          view.push_back(&sv->storage[d.index]);
          continue;
        }
        std::uint64_t coin = derive_seed(
            master_seed, "consensus.equiv",
            (std::uint64_t(d.caster) << 32) | node.id, height * 100 + stage);
        view.push_back(&sv->storage[coin & 1 ? d.index : d.alt_index]);
      }
    }
    for (const auto& v : sv->storage) outcome.script.votes.push_back(v);
    return sv;
  };

  auto count_for = [](const std::vector<const Vote*>& view,
                      const Digest& hash) {
    return static_cast<std::size_t>(
        std::count_if(view.begin(), view.end(),
                      [&](const Vote* v) { return v->block_hash == hash; }));
  };
  auto quorum_of = [&](std::size_t committee_size) {
    return static_cast<std::size_t>(
        std::ceil(params.quorum_fraction * static_cast<double>(committee_size)));
  };

  std::size_t attempts_run = 0;
  for (std::size_t attempt = 0; attempt < params.max_retry_pairs; ++attempt) {
    ++attempts_run;

    // Soft vote: back the leader if it validates.
    auto soft = run_stage(soft_stage(attempt), [&](NodeId) {
      return leader_valid ? leader_hash : kNullDigest;
    });
    std::size_t soft_committee =
        outcome.committee_sizes[outcome.committee_sizes.size() - 1];
    std::size_t soft_quorum = quorum_of(soft_committee);
    std::map<NodeId, bool> soft_ok;
    for (const auto& node : nodes)
      soft_ok[node.id] = leader_valid &&
                         count_for(soft->views[node.id], leader_hash) >=
                             soft_quorum;

    // Cert vote: back the leader only after seeing a soft quorum.
    auto cert = run_stage(cert_stage(attempt), [&](NodeId id) {
      return soft_ok[id] ? leader_hash : kNullDigest;
    });
    std::size_t cert_committee =
        outcome.committee_sizes[outcome.committee_sizes.size() - 1];
    std::size_t cert_quorum = quorum_of(cert_committee);

    bool all_honest_decided = true;
    for (const auto& node : nodes) {
      if (node.profile != ByzantineProfile::honest) continue;
      auto it = outcome.local_decisions.find(node.id);
      if (it != outcome.local_decisions.end() && !it->second.is_zero())
        continue;
      if (leader_valid &&
          count_for(cert->views[node.id], leader_hash) >= cert_quorum)
        outcome.local_decisions[node.id] = leader_hash;
      else
        all_honest_decided = false;
    }
    if (all_honest_decided) break;
  }
  outcome.stages_used = static_cast<std::uint32_t>(1 + 2 * attempts_run);

  // Certificate transfer: any honest certificate finalizes the leader for
  // the whole network; otherwise the height closes with the empty block.
  Digest final_hash = kNullDigest;
  for (const auto& node : nodes) {
    if (node.profile != ByzantineProfile::honest) continue;
    auto it = outcome.local_decisions.find(node.id);
    if (it == outcome.local_decisions.end() || it->second.is_zero()) continue;
    if (!final_hash.is_zero() && final_hash != it->second)
      outcome.safety_violation = true;
    final_hash = it->second;
  }
  outcome.decision = final_hash;
  outcome.script.finalized_hash = final_hash;
  if (!final_hash.is_zero() && leader) outcome.decided_block = leader->block;
  for (const auto& node : nodes) {
    if (node.profile == ByzantineProfile::honest &&
        !outcome.local_decisions.contains(node.id))
      outcome.local_decisions[node.id] = kNullDigest;
  }
  return outcome;
}

std::map<NodeId, double> apply_reputation(
    const CVScript& script, const std::map<NodeId, bool>& proposal_validity,
    const std::map<NodeId, double>& reputations,
    const ReputationParams& params, const KeyRegistry& keys) {
  std::map<NodeId, std::map<std::uint32_t, std::set<Digest>>> cast;
  for (const Vote& v : script.votes) {
    if (v.height != script.height)
      throw InvalidInputError("cvscript: vote height mismatch");
    if (!verify_vote(v, keys))
      throw RejectedVoteError("cvscript: invalid vote signature from node " +
                              std::to_string(v.validator));
    cast[v.validator][v.stage].insert(v.block_hash);
  }

  std::set<NodeId> penalized;
  for (const auto& [id, stages] : cast)
    for (const auto& [stage, hashes] : stages)
      if (hashes.size() > 1) penalized.insert(id);
  for (const auto& [id, valid] : proposal_validity)
    if (!valid) penalized.insert(id);

  std::map<NodeId, double> updated = reputations;
  auto clamp = [](double r) { return std::min(1.0, std::max(0.0, r)); };
  for (NodeId id : penalized) {
    auto it = updated.find(id);
    if (it == updated.end())
      throw InvalidInputError("cvscript: unknown validator " +
                              std::to_string(id));
    it->second = clamp(it->second - params.delta2);
  }
  for (const auto& [id, stages] : cast) {
    if (penalized.contains(id)) continue;
    bool matched = false;
    bool consistent = true;
    for (const auto& [stage, hashes] : stages) {
      for (const Digest& h : hashes) {
        if (h == script.finalized_hash) matched = true;
        else if (!h.is_zero()) consistent = false;  // backed a losing block
      }
    }
    if (!(matched && consistent)) continue;
    auto it = updated.find(id);
    if (it == updated.end())
      throw InvalidInputError("cvscript: unknown validator " +
                              std::to_string(id));
    it->second = clamp(it->second + params.delta1);
  }
  return updated;
}

std::vector<std::uint8_t> reputation_table_bytes(
    const std::map<NodeId, double>& reputations) {
  ByteWriter w;
  w.put_u32(static_cast<std::uint32_t>(reputations.size()));
  for (const auto& [id, r] : reputations) {
    w.put_u32(id);
    w.put_f64(r);
  }
  return w.take();
}

HeightReport run_height(NetworkState& state) {
  const MABlock& tip = state.chain.tip();
  std::uint64_t height = tip.header.height + 1;
  Digest seed = ledger::election_seed(ledger::block_hash(tip), height);

  auto committee0 =
      sortition_elect(state.nodes, state.keys, seed, 0, state.sortition);

  std::map<NodeId, const FullNode*> by_id;
  for (const auto& node : state.nodes) by_id[node.id] = &node;

  std::vector<Candidate> candidates;
  std::map<NodeId, bool> proposal_validity;
  for (const auto& member : committee0) {
    const FullNode* node = by_id.at(member.id);
    if (node->profile == ByzantineProfile::silent) continue;
    MABlock block =
        propose_candidate(*node, state.mempool, tip, state.store, state.keys,
                          state.task_id, state.cvscript_ptr);
    proposal_validity[member.id] =
        ledger::validate_block(block, tip, state.store, state.keys).ok();
    candidates.push_back({member, std::move(block)});
  }

  VoteOutcome outcome = run_multistage_vote(
      state.nodes, state.keys, candidates, seed, state.sortition, height, tip,
      state.store, state.master_seed, committee0.size());

  MABlock block =
      outcome.decided_block
          ? *outcome.decided_block
          : ledger::build_block(height, tip, {}, state.task_id, kNullDigest,
                                state.cvscript_ptr, state.keys);
  state.chain.append(block, state.store, state.keys);
  if (outcome.decided_block) state.mempool.clear();

  state.cvscript_ptr = state.store.put(cvscript_bytes(outcome.script));

  std::map<NodeId, double> reputations;
  for (const auto& node : state.nodes) reputations[node.id] = node.reputation;
  auto updated = apply_reputation(outcome.script, proposal_validity,
                                  reputations, state.reputation, state.keys);
  for (auto& node : state.nodes) node.reputation = updated.at(node.id);

  HeightReport report;
  report.height = height;
  report.decided = outcome.decision;
  report.empty_block = outcome.decision.is_zero();
  report.stages_used = outcome.stages_used;
  report.committee_sizes = outcome.committee_sizes;
  report.byz_count = static_cast<std::size_t>(
      std::count_if(state.nodes.begin(), state.nodes.end(), [](const auto& n) {
        return n.profile != ByzantineProfile::honest;
      }));
  report.safety_violation = outcome.safety_violation;
  report.reputation_table_digest =
      state.store.put(reputation_table_bytes(updated));
  return report;
}

std::vector<FullNode> make_nodes(std::size_t n, double byz_fraction,
                                 double r0, std::uint64_t master_seed,
                                 NodeId id_base) {
  if (n < 1) throw InvalidInputError("make_nodes: n must be >= 1");
  if (byz_fraction < 0.0 || byz_fraction > 1.0)
    throw InvalidInputError("make_nodes: byz_fraction must be in [0,1]");
  std::vector<FullNode> nodes;
  nodes.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    nodes.push_back({static_cast<NodeId>(id_base + i), r0,
                     ByzantineProfile::honest});

  auto count = static_cast<std::size_t>(
      std::llround(byz_fraction * static_cast<double>(n)));
  auto stream = derive_stream(master_seed, "consensus.byz");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    std::size_t j = i + stream.uniform_index(n - i);
    std::swap(order[i], order[j]);
  }
  static constexpr ByzantineProfile kCycle[] = {
      ByzantineProfile::silent, ByzantineProfile::equivocator,
      ByzantineProfile::invalid_proposer};
  std::vector<std::size_t> chosen(order.begin(),
                                  order.begin() +
                                      static_cast<std::ptrdiff_t>(count));
  std::sort(chosen.begin(), chosen.end());
  for (std::size_t k = 0; k < chosen.size(); ++k)
    nodes[chosen[k]].profile = kCycle[k % 3];
  return nodes;
}

}  // namespace socialfl::consensus
