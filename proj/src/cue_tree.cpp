#include "toc/cue_tree.hpp"

#include <algorithm>
#include <sstream>

#include "toc/errors.hpp"

namespace toc::cue_tree {

CueTree::CueTree(int n_leaves) : n_leaves_(n_leaves) {
  if (n_leaves < 1) throw InvalidSizeError("a cue tree needs at least one leaf");
  nodes_.reserve(2 * static_cast<size_t>(n_leaves) - 1);
  leaf_ids_.assign(n_leaves, -1);
  build({0, n_leaves - 1}, 0, -1);
}

int CueTree::build(Interval span, int depth, int parent) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{span, depth, parent, -1, -1});
  max_depth_ = std::max(max_depth_, depth);
  if (span.is_leaf()) {
    leaf_ids_[span.lo] = id;
    return id;
  }
  const int mid = span.lo + (span.hi - span.lo) / 2;
  const int l = build({span.lo, mid}, depth + 1, id);
  const int r = build({mid + 1, span.hi}, depth + 1, id);
  nodes_[id].left = l;
  nodes_[id].right = r;
  return id;
}

int CueTree::leaf(int i) const {
  if (i < 0 || i >= n_leaves_)
    throw OutOfRangeError("leaf " + std::to_string(i) + " outside [0, " +
                          std::to_string(n_leaves_ - 1) + "]");
  return leaf_ids_[i];
}

std::vector<int> CueTree::path_to_leaf(int i) const {
  std::vector<int> path;
  for (int id = leaf(i); id >= 0; id = nodes_[id].parent) path.push_back(id);
  std::reverse(path.begin(), path.end());
  return path;
}

CueTree build_tree(int n_leaves) { return CueTree(n_leaves); }

TrajectorySubtree backtrack(const CueTree& tree, const std::set<int>& selected) {
  if (selected.empty()) throw EmptySelectionError("no leaf selected");
  TrajectorySubtree out;
  out.n_leaves = tree.n_leaves();
  out.selected = selected;

  std::vector<char> in_subtree(tree.nodes().size(), 0);
  for (int leaf : selected)
    for (int id : tree.path_to_leaf(leaf)) in_subtree[id] = 1;

  for (size_t id = 0; id < tree.nodes().size(); ++id) {
    if (!in_subtree[id]) continue;
    const Node& n = tree.nodes()[id];
    if (static_cast<int>(out.layers.size()) <= n.depth) out.layers.resize(n.depth + 1);
    out.layers[n.depth].push_back(n.span);
  }
  for (auto& layer : out.layers) std::sort(layer.begin(), layer.end());
  return out;
}

std::vector<Compilation> layer_compilations(const TrajectorySubtree& subtree) {
  std::vector<Compilation> chain;
  std::vector<Interval> persisted;  // selected leaves reached at a shallower depth

  for (const auto& layer : subtree.layers) {
    std::vector<Interval> nodes = layer;
    nodes.insert(nodes.end(), persisted.begin(), persisted.end());
    std::sort(nodes.begin(), nodes.end());

    Compilation c;
    for (const auto& n : nodes)
      for (int i = n.lo; i <= n.hi; ++i) c.clip_indices.push_back(i);

    for (const auto& n : layer)
      if (n.is_leaf()) persisted.push_back(n);

    const bool seen = std::any_of(chain.begin(), chain.end(), [&](const Compilation& prev) {
      return prev.clip_indices == c.clip_indices;
    });
    if (!seen) chain.push_back(std::move(c));
  }
  return chain;
}

std::string describe(const TrajectorySubtree& subtree, const std::vector<Compilation>& chain) {
  std::ostringstream os;
  os << "leaves: " << subtree.n_leaves << "\nselected:";
  for (int s : subtree.selected) os << ' ' << s;
  os << '\n';
  for (size_t d = 0; d < subtree.layers.size(); ++d) {
    os << "layer " << d << ":";
    for (const auto& n : subtree.layers[d]) os << " [" << n.lo << ',' << n.hi << ']';
    os << '\n';
  }
  for (size_t k = 0; k < chain.size(); ++k) {
    os << "compilation " << k << ": {";
    for (size_t i = 0; i < chain[k].clip_indices.size(); ++i)
      os << (i ? "," : "") << chain[k].clip_indices[i];
    os << "}\n";
  }
  return os.str();
}

}  // namespace toc::cue_tree
