#include "ebms/structure.hpp"

#include <algorithm>
#include <functional>
#include <set>

#include "ebms/errors.hpp"

namespace ebms {

TransitionStructure TransitionStructure::build(
    std::vector<std::string> state_names,
    const std::vector<std::pair<int, int>>& edges) {
  TransitionStructure s;
  require(!state_names.empty(), ErrorKind::BadInput, "no states given");
  {
    std::set<std::string> seen;
    for (const auto& n : state_names)
      require(seen.insert(n).second, ErrorKind::BadInput,
              "duplicate state name '" + n + "'");
  }
  s.state_names_ = std::move(state_names);
  const int S = s.n_states();
  s.out_.assign(static_cast<std::size_t>(S), {});
  s.in_.assign(static_cast<std::size_t>(S), 0);

  std::set<std::pair<int, int>> seen_edges;
  std::vector<int> indegree(static_cast<std::size_t>(S), 0);
  bool multiple_in = false;
  for (const auto& [from, to] : edges) {
    require(from >= 0 && from < S && to >= 0 && to < S, ErrorKind::BadInput,
            "transition endpoint out of range");
    require(from != to, ErrorKind::SelfTransition,
            "transition from state " + s.state_names_[static_cast<std::size_t>(from)] +
                " to itself");
    require(seen_edges.insert({from, to}).second, ErrorKind::DuplicateTransition,
            "transition " + s.state_names_[static_cast<std::size_t>(from)] + " -> " +
                s.state_names_[static_cast<std::size_t>(to)] + " declared twice");
    Transition t;
    t.from = from;
    t.to = to;
    t.id = static_cast<int>(s.transitions_.size()) + 1;
    s.transitions_.push_back(t);
    s.out_[static_cast<std::size_t>(from)].push_back(t.id);
    if (indegree[static_cast<std::size_t>(to)]++ == 0)
      s.in_[static_cast<std::size_t>(to)] = t.id;
    else
      multiple_in = true;
  }

  // cycle check by iterative DFS colouring
  std::vector<int> colour(static_cast<std::size_t>(S), 0);
  std::function<bool(int)> has_cycle = [&](int v) -> bool {
    colour[static_cast<std::size_t>(v)] = 1;
    for (int id : s.out_[static_cast<std::size_t>(v)]) {
      int w = s.transitions_[static_cast<std::size_t>(id - 1)].to;
      if (colour[static_cast<std::size_t>(w)] == 1) return true;
      if (colour[static_cast<std::size_t>(w)] == 0 && has_cycle(w)) return true;
    }
    colour[static_cast<std::size_t>(v)] = 2;
    return false;
  };
  for (int v = 0; v < S; ++v)
    if (colour[static_cast<std::size_t>(v)] == 0 && has_cycle(v)) {
      s.acyclic_ = false;
      break;
    }

  // tree: acyclic, unique root with indegree 0, all other indegrees 1,
  // and every state reachable from the root
  s.tree_ = false;
  if (s.acyclic_ && !multiple_in) {
    int root = -1;
    int n_roots = 0;
    for (int v = 0; v < S; ++v)
      if (indegree[static_cast<std::size_t>(v)] == 0) {
        root = v;
        ++n_roots;
      }
    if (n_roots == 1) {
      // indegree <= 1 everywhere and a single root: reachability decides
      std::vector<char> seen(static_cast<std::size_t>(S), 0);
      std::vector<int> stack{root};
      seen[static_cast<std::size_t>(root)] = 1;
      int n_seen = 1;
      while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        for (int id : s.out_[static_cast<std::size_t>(v)]) {
          int w = s.transitions_[static_cast<std::size_t>(id - 1)].to;
          if (!seen[static_cast<std::size_t>(w)]) {
            seen[static_cast<std::size_t>(w)] = 1;
            ++n_seen;
            stack.push_back(w);
          }
        }
      }
      if (n_seen == S) {
        s.tree_ = true;
        s.root_ = root;
      }
    }
  }
  return s;
}

int TransitionStructure::root() const {
  require(tree_, ErrorKind::NotTree, "structure has no unique root");
  return root_;
}

const Transition& TransitionStructure::transition(int id) const {
  require(id >= 1 && id <= n_transitions(), ErrorKind::UnknownTransition,
          "transition id " + std::to_string(id) + " out of range");
  return transitions_[static_cast<std::size_t>(id - 1)];
}

int TransitionStructure::find_transition(int from, int to) const {
  for (const auto& t : transitions_)
    if (t.from == from && t.to == to) return t.id;
  return 0;
}

const std::vector<int>& TransitionStructure::out_transitions(int state) const {
  require(state >= 0 && state < n_states(), ErrorKind::BadInput,
          "state index out of range");
  return out_[static_cast<std::size_t>(state)];
}

int TransitionStructure::in_transition(int state) const {
  require(state >= 0 && state < n_states(), ErrorKind::BadInput,
          "state index out of range");
  return in_[static_cast<std::size_t>(state)];
}

int TransitionStructure::state_index(const std::string& name) const {
  auto it = std::find(state_names_.begin(), state_names_.end(), name);
  return it == state_names_.end() ? -1
                                  : static_cast<int>(it - state_names_.begin());
}

std::vector<int> TransitionStructure::path(int from, int to) const {
  require(tree_, ErrorKind::NotTree, "paths are defined for trees only");
  std::vector<int> ids;
  int v = to;
  while (v != from) {
    int id = in_[static_cast<std::size_t>(v)];
    require(id != 0, ErrorKind::BadInput,
            "state " + state_names_[static_cast<std::size_t>(to)] +
                " is not reachable from " +
                state_names_[static_cast<std::size_t>(from)]);
    ids.push_back(id);
    v = transitions_[static_cast<std::size_t>(id - 1)].from;
  }
  std::reverse(ids.begin(), ids.end());
  return ids;
}

TransitionStructure TransitionStructure::from_json(const nlohmann::json& j) {
  require(j.is_object() && j.contains("states") && j.contains("transitions"),
          ErrorKind::BadInput,
          "structure json needs 'states' and 'transitions'");
  std::vector<std::string> names;
  for (const auto& n : j.at("states")) {
    if (n.is_string())
      names.push_back(n.get<std::string>());
    else
      names.push_back(n.dump());
  }
  std::vector<std::pair<int, int>> edges;
  for (const auto& e : j.at("transitions")) {
    require(e.contains("from") && e.contains("to"), ErrorKind::BadInput,
            "transition entries need 'from' and 'to'");
    // states are 1-based in files
    edges.emplace_back(e.at("from").get<int>() - 1, e.at("to").get<int>() - 1);
  }
  return build(std::move(names), edges);
}

nlohmann::json TransitionStructure::to_json() const {
  nlohmann::json j;
  j["states"] = state_names_;
  j["transitions"] = nlohmann::json::array();
  for (const auto& t : transitions_)
    j["transitions"].push_back({{"from", t.from + 1}, {"to", t.to + 1}});
  return j;
}

}  // namespace ebms
