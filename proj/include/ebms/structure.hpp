#pragma once

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace ebms {

// One allowed move between states.  States are 0-based indices into the
// state-name list; transition ids are 1-based and follow the order in
// which the transitions were declared.
struct Transition {
  int from = 0;
  int to = 0;
  int id = 0;
};

// Directed multi-state topology.  Construction validates the edge list
// (no self loops, no duplicates) and classifies the graph; estimators
// that need a rooted tree check is_tree() themselves.
class TransitionStructure {
 public:
  TransitionStructure() = default;

  // edges are 0-based (from, to) pairs in declaration order
  static TransitionStructure build(std::vector<std::string> state_names,
                                   const std::vector<std::pair<int, int>>& edges);

  int n_states() const { return static_cast<int>(state_names_.size()); }
  int n_transitions() const { return static_cast<int>(transitions_.size()); }
  const std::vector<std::string>& state_names() const { return state_names_; }
  const std::vector<Transition>& transitions() const { return transitions_; }

  bool is_acyclic() const { return acyclic_; }
  // tree: acyclic, every state has at most one inbound edge, and all
  // states are reachable from a single root
  bool is_tree() const { return tree_; }
  int root() const;  // only valid when is_tree()

  const Transition& transition(int id) const;      // 1-based id
  int find_transition(int from, int to) const;     // id, or 0 if absent
  const std::vector<int>& out_transitions(int state) const;  // ids
  int in_transition(int state) const;              // id, or 0 (root); tree only
  int state_index(const std::string& name) const;  // -1 if absent

  // transition ids along the unique tree path from -> to; empty if
  // to == from; throws if to is not a descendant of from
  std::vector<int> path(int from, int to) const;

  static TransitionStructure from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

 private:
  std::vector<std::string> state_names_;
  std::vector<Transition> transitions_;
  std::vector<std::vector<int>> out_;  // per state, transition ids
  std::vector<int> in_;                // per state, inbound id or 0
  bool acyclic_ = true;
  bool tree_ = false;
  int root_ = -1;
};

}  // namespace ebms
