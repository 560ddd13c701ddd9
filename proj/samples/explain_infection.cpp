// Train a small infection model and print which inputs explain one node.

#include <cstdio>

#include "gnx/gnx.hpp"

int main() {
  using namespace gnx;
  Dataset train_set{infection::generate_dataset(infection::Config::train(2000, 1)), {}};
  Dataset val_set{infection::generate_dataset(infection::Config::eval(200, 2)), {}};
  TrainConfig cfg = TrainConfig::infection();
  cfg.epochs = 2;
  const TrainResult r = train(cfg, train_set, val_set);
  std::printf("validation accuracy %.3f\n", r.metrics.best_val_metric);

  // First held-out node that became sick this step.
  for (const Graph& g : val_set.graphs)
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
      if ((*g.labels)[i] == 0 || g.nodes(i, infection::kSick) > 0.0) continue;
      const Explanation e = lrp(r.model, g, Target::node_logit(i));
      const EntityScores s = input_scores(e);
      std::printf("node %zu  logit %.3f\n", i, e.output);
      for (std::size_t v = 0; v < g.num_nodes(); ++v)
        if (s.nodes[v] != 0.0) std::printf("  node %zu  relevance %+.4f\n", v, s.nodes[v]);
      RenderSpec spec;
      spec.node_feature_names = infection::node_feature_names();
      spec.edge_feature_names = infection::edge_feature_names();
      write_text_file("infection_explanation.svg", to_svg(g, e, spec));
      return 0;
    }
  return 0;
}
