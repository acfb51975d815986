#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace toc::cue_tree {

// Closed interval of clip indices [lo, hi].
struct Interval {
  int lo = 0;
  int hi = 0;

  bool is_leaf() const { return lo == hi; }
  int size() const { return hi - lo + 1; }
  auto operator<=>(const Interval&) const = default;
};

struct Node {
  Interval span;
  int depth = 0;
  int parent = -1;
  int left = -1;
  int right = -1;
};

// Binary segment tree over N clips. Node 0 is the root [0, N-1]; an inner
// node [lo, hi] splits at floor((lo + hi) / 2).
class CueTree {
 public:
  explicit CueTree(int n_leaves);

  int n_leaves() const { return n_leaves_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& root() const { return nodes_.front(); }
  // Node id of leaf [i, i].
  int leaf(int i) const;
  int depth() const { return max_depth_ + 1; }

  // Root-to-leaf node ids.
  std::vector<int> path_to_leaf(int i) const;

 private:
  int build(Interval span, int depth, int parent);

  int n_leaves_;
  int max_depth_ = 0;
  std::vector<Node> nodes_;
  std::vector<int> leaf_ids_;
};

// Throws InvalidSizeError when n_leaves < 1.
CueTree build_tree(int n_leaves);

// Union of root-to-leaf paths of the selected leaves, grouped by depth.
struct TrajectorySubtree {
  int n_leaves = 0;
  std::set<int> selected;
  std::vector<std::vector<Interval>> layers;  // sorted by lo within a layer
};

// Throws EmptySelectionError or OutOfRangeError.
TrajectorySubtree backtrack(const CueTree& tree, const std::set<int>& selected);

struct Compilation {
  std::vector<int> clip_indices;  // strictly increasing
  std::optional<std::string> caption;

  bool operator==(const Compilation&) const = default;
};

// One compilation per subtree layer (the concatenated leaf sets of its
// nodes), with selected leaves persisting into layers deeper than
// themselves. Compilations equal to an earlier one are dropped, so the
// result is a strictly shrinking chain from {0..N-1} to the selection.
std::vector<Compilation> layer_compilations(const TrajectorySubtree& subtree);

// Multi-line debug rendering of layers and compilations.
std::string describe(const TrajectorySubtree& subtree, const std::vector<Compilation>& chain);

}  // namespace toc::cue_tree
