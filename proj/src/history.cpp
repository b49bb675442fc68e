#include "pscheck/history.hpp"

#include <algorithm>
#include <deque>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace pscheck {

std::string HistoryLabel::key() const {
  std::string k;
  k.push_back(static_cast<char>(kind));
  append_varint(k, tid);
  if (kind == Call || kind == Ret) {
    k += method;
    k.push_back('\0');
    for (Value v : phi) append_varint(k, v);
  }
  return k;
}

HistoryProjector::HistoryProjector(const System& sys, const MethodSet& f)
    : sys_(sys), f_(f), flags_(sys.program().method_flags(f)) {}

std::optional<HistoryLabel> HistoryProjector::project(const ResolvedTransition& rt) const {
  if (rt.kind == TransKind::Crash) return HistoryLabel{HistoryLabel::Crash, 0, {}, {}};
  if (rt.kind != TransKind::Thread || !rt.label) return std::nullopt;
  const ActionLabel& l = *rt.label;
  if ((l.kind == LabelKind::Call || l.kind == LabelKind::Ret) && in_f(l.method)) {
    return HistoryLabel{l.kind == LabelKind::Call ? HistoryLabel::Call : HistoryLabel::Ret, rt.tid,
                        sys_.program().methods[static_cast<std::size_t>(l.method)].name, l.phi};
  }
  if (is_sf_class(l, sys_.decls())) return HistoryLabel{HistoryLabel::Sf, rt.tid, {}, {}};
  return std::nullopt;
}

History history_of(const System& sys, const Trace& t, const MethodSet& f) {
  HistoryProjector proj(sys, f);
  History h;
  for (const auto& rt : t)
    if (auto l = proj.project(rt)) h.push_back(std::move(*l));
  return h;
}

namespace {

using ojson = nlohmann::ordered_json;

ojson label_json(const HistoryLabel& l, const Decls& d) {
  ojson j;
  if (l.kind == HistoryLabel::Crash) {
    j["kind"] = "crash";
    return j;
  }
  j["tid"] = l.tid + 1;
  j["kind"] = l.kind == HistoryLabel::Call ? "call" : l.kind == HistoryLabel::Ret ? "ret" : "sf";
  if (l.kind == HistoryLabel::Call || l.kind == HistoryLabel::Ret) {
    j["f"] = l.method;
    std::vector<std::size_t> order(l.phi.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return d.registers[a] < d.registers[b]; });
    ojson phi = ojson::object();
    for (auto i : order) phi[d.registers[i]] = l.phi[i];
    j["phi"] = std::move(phi);
  }
  return j;
}

}  // namespace

std::string history_to_jsonl(const History& h, const Decls& d) {
  std::string out;
  for (const auto& l : h) out += label_json(l, d).dump() + "\n";
  return out;
}

History history_from_jsonl(const std::string& text, const Decls& d) {
  History h;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      HistoryLabel l;
      const std::string kind = j.at("kind");
      if (kind == "crash") {
        l.kind = HistoryLabel::Crash;
      } else {
        l.tid = static_cast<ThreadId>(j.at("tid").get<int>() - 1);
        if (kind == "sf") {
          l.kind = HistoryLabel::Sf;
        } else if (kind == "call" || kind == "ret") {
          l.kind = kind == "call" ? HistoryLabel::Call : HistoryLabel::Ret;
          l.method = j.at("f");
          l.phi.assign(d.registers.size(), 0);
          for (const auto& [name, v] : j.at("phi").items()) {
            auto r = d.find_register(name);
            if (!r) throw InputError("unknown register '" + name + "'");
            l.phi[*r] = v.get<Value>();
          }
        } else {
          throw InputError("unknown kind '" + kind + "'");
        }
      }
      h.push_back(std::move(l));
    } catch (const nlohmann::json::exception& e) {
      throw InputError("history line " + std::to_string(n) + ": " + e.what());
    }
  }
  return h;
}

std::string history_to_string(const History& h, const Decls& d) {
  std::string s;
  for (const auto& l : h) {
    if (!s.empty()) s += " ";
    switch (l.kind) {
      case HistoryLabel::Crash: s += "crash"; break;
      case HistoryLabel::Sf: s += std::to_string(l.tid + 1) + ":SF"; break;
      default: {
        s += std::to_string(l.tid + 1) + ":" + (l.kind == HistoryLabel::Call ? "call " : "ret ") + l.method + "(";
        for (std::size_t i = 0; i < l.phi.size(); ++i)
          s += (i ? "," : "") + d.registers[i] + "=" + std::to_string(l.phi[i]);
        s += ")";
      }
    }
  }
  return s;
}

HistoryTrie::HistoryTrie() { nodes_.emplace_back(); }

std::uint32_t HistoryTrie::child(std::uint32_t node, const HistoryLabel& l) {
  const std::string k = l.key();
  auto it = nodes_[node].children.find(k);
  if (it != nodes_[node].children.end()) return it->second;
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_[node].children.emplace(k, id);
  Node n;
  n.parent = node;
  n.label = l;
  nodes_.push_back(std::move(n));
  return id;
}

std::optional<std::uint32_t> HistoryTrie::find_child(std::uint32_t node, const HistoryLabel& l) const {
  auto it = nodes_[node].children.find(l.key());
  if (it == nodes_[node].children.end()) return std::nullopt;
  return it->second;
}

bool HistoryTrie::contains(const History& h) const {
  std::uint32_t n = 0;
  for (const auto& l : h) {
    auto c = find_child(n, l);
    if (!c) return false;
    n = *c;
  }
  return nodes_[n].member;
}

void HistoryTrie::insert(const History& h) {
  std::uint32_t n = 0;
  for (const auto& l : h) n = child(n, l);
  nodes_[n].member = true;
}

std::size_t HistoryTrie::size() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.member; }));
}

History HistoryTrie::history_at(std::uint32_t node) const {
  History h;
  while (node != 0) {
    h.push_back(nodes_[node].label);
    node = nodes_[node].parent;
  }
  std::reverse(h.begin(), h.end());
  return h;
}

std::vector<History> HistoryTrie::members() const {
  std::vector<History> out;
  for (std::uint32_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].member) out.push_back(history_at(i));
  return out;
}

HistoryTrie history_set(const System& sys, const MethodSet& f, bool* hit_bound) {
  HistoryProjector proj(sys, f);
  HistoryTrie trie;
  trie.mark(0);
  std::unordered_map<std::string, std::uint32_t> seen;
  struct Item {
    SysState s;
    std::uint32_t node;
  };
  std::vector<Item> frontier{{sys.initial(), 0}};
  auto key_of = [&](const SysState& s, std::uint32_t node) {
    std::string k = sys.key(s);
    append_varint(k, node);
    return k;
  };
  seen.emplace(key_of(frontier[0].s, 0), 0);
  if (hit_bound) *hit_bound = false;
  for (std::uint32_t depth = 0; !frontier.empty(); ++depth) {
    if (depth >= sys.bounds().max_steps) {
      if (hit_bound) *hit_bound = true;
      break;
    }
    std::vector<Item> next;
    for (auto& item : frontier) {
      for (auto& succ : sys.enabled(item.s)) {
        std::uint32_t node = item.node;
        if (auto l = proj.project(succ.rt)) node = trie.child(node, *l);
        if (seen.emplace(key_of(succ.state, node), 0).second) {
          trie.mark(node);
          next.push_back({std::move(succ.state), node});
          if (seen.size() >= sys.bounds().max_states) throw BudgetExceeded("history_set: state budget exhausted");
        }
      }
    }
    frontier = std::move(next);
  }
  return trie;
}

std::optional<Trace> find_history_witness(const System& sys, const MethodSet& f, const History& h,
                                          const std::optional<SysState>& from) {
  HistoryProjector proj(sys, f);
  const SysState root = from ? *from : sys.initial();
  if (h.empty()) return Trace{};
  std::unordered_map<std::string, std::uint32_t> seen;
  std::vector<NodeRef> nodes{NodeRef{0, 0}};
  struct Item {
    SysState s;
    std::uint32_t pos;
    std::uint32_t id;
  };
  auto key_of = [&](const SysState& s, std::uint32_t pos) {
    std::string k = sys.key(s);
    append_varint(k, pos);
    return k;
  };
  std::deque<Item> queue;
  queue.push_back({root, 0, 0});
  seen.emplace(key_of(root, 0), 0);
  while (!queue.empty()) {
    Item it = std::move(queue.front());
    queue.pop_front();
    auto succ = sys.enabled(it.s);
    for (std::uint32_t i = 0; i < succ.size(); ++i) {
      std::uint32_t pos = it.pos;
      if (auto l = proj.project(succ[i].rt)) {
        if (!(*l == h[pos])) continue;
        ++pos;
      }
      std::string k = key_of(succ[i].state, pos);
      if (!seen.emplace(std::move(k), static_cast<std::uint32_t>(nodes.size())).second) continue;
      nodes.push_back(NodeRef{it.id, i});
      if (pos == h.size()) {
        std::vector<std::uint32_t> choices;
        for (std::uint32_t n = static_cast<std::uint32_t>(nodes.size() - 1); n != 0; n = nodes[n].parent)
          choices.push_back(nodes[n].choice);
        std::reverse(choices.begin(), choices.end());
        return trace_from_choices(sys, root, choices);
      }
      if (nodes.size() >= sys.bounds().max_states) throw BudgetExceeded("witness search: state budget exhausted");
      queue.push_back({std::move(succ[i].state), pos, static_cast<std::uint32_t>(nodes.size() - 1)});
    }
  }
  return std::nullopt;
}

}  // namespace pscheck
