#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pscheck/system.hpp"

namespace pscheck {

struct HistoryLabel {
  enum Kind : std::uint8_t { Call, Ret, Sf, Crash } kind = Sf;
  ThreadId tid = 0;
  std::string method;  // Call and Ret
  LocalStore phi;      // Call and Ret

  bool operator==(const HistoryLabel&) const = default;
  std::string key() const;
};

using History = std::vector<HistoryLabel>;

// Classifies transitions of one program against a method set F.
class HistoryProjector {
 public:
  HistoryProjector(const System& sys, const MethodSet& f);
  std::optional<HistoryLabel> project(const ResolvedTransition& rt) const;
  bool in_f(std::int32_t method) const { return method >= 0 && flags_[static_cast<std::size_t>(method)]; }
  const MethodSet& methods() const { return f_; }

 private:
  const System& sys_;
  MethodSet f_;
  std::vector<bool> flags_;
};

History history_of(const System& sys, const Trace& t, const MethodSet& f);

std::string history_to_jsonl(const History& h, const Decls& d);
History history_from_jsonl(const std::string& text, const Decls& d);
std::string history_to_string(const History& h, const Decls& d);

// Prefix-shared set of histories. Node 0 is the empty history.
class HistoryTrie {
 public:
  HistoryTrie();
  std::uint32_t child(std::uint32_t node, const HistoryLabel& l);  // creates on demand
  std::optional<std::uint32_t> find_child(std::uint32_t node, const HistoryLabel& l) const;
  void mark(std::uint32_t node) { nodes_[node].member = true; }
  bool member(std::uint32_t node) const { return nodes_[node].member; }
  bool contains(const History& h) const;
  void insert(const History& h);
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t size() const;  // number of member histories
  History history_at(std::uint32_t node) const;
  std::vector<History> members() const;

 private:
  struct Node {
    std::map<std::string, std::uint32_t> children;
    std::uint32_t parent = 0;
    HistoryLabel label;
    bool member = false;
  };
  std::vector<Node> nodes_;
};

// Every history of a trace of sys within its bounds.
HistoryTrie history_set(const System& sys, const MethodSet& f, bool* hit_bound = nullptr);

// A trace of sys whose F-history is exactly h, searching within sys bounds.
std::optional<Trace> find_history_witness(const System& sys, const MethodSet& f, const History& h,
                                          const std::optional<SysState>& from = std::nullopt);

}  // namespace pscheck
