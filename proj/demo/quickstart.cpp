// Minimal end-to-end use of the library on a small synthetic graph:
// hide attributes, learn fair embeddings, classify, and report metrics.

#include <iostream>

#include "fairac.hpp"

int main() {
  using namespace fairac;

  SyntheticSpec spec;
  spec.nodes = 150;
  spec.target_edges = 1200;
  const Graph full = make_synthetic_graph(spec);
  const Graph g = apply_attribute_missing(full, 0.3, /*seed=*/1);
  std::cout << g.v_minus().size() << " of " << g.num_nodes() << " nodes have no attributes\n";

  WalkConfig walks;
  walks.walks_per_node = 5;
  walks.walk_length = 40;
  walks.epochs = 3;
  const TopoEmbeddingTable topo = embed_all(g, walks);

  FairACConfig fc;
  fc.epochs = 200;
  fc.seed = 1;
  FairACModel model = train_fairac(g, topo, fc);
  const EmbeddingSet emb = infer_embeddings(g, model.params, topo);

  const NodeSplit split = train_test_split(g, 1);
  GCNConfig gc;
  gc.epochs = 200;
  const ClassifierResult clf = train_classifier(emb.h, normalize_adjacency(g), g, split, gc);

  std::vector<double> scores;
  std::vector<int> pred, y, s;
  for (NodeId i : split.test_ids) {
    scores.push_back(clf.probabilities[i]);
    pred.push_back(clf.probabilities[i] >= 0.5);
    y.push_back(g.labels[i]);
    s.push_back(g.sensitive_truth[i]);
  }
  const EvaluationReport r = evaluate(pred, scores, y, s);
  std::cout << "accuracy " << r.accuracy_pct() << "  auc " << r.auc_pct() << "  dSP "
            << r.delta_sp_pct() << "  dEO " << r.delta_eo_pct() << '\n';
}
