// Walks one sentence through every stage by hand, then runs the full
// pipeline over the bundled ten-sentence dataset.
//
//   walkthrough [path/to/config.json]

#include <iostream>

#include <scene/scene.hpp>

int main(int argc, char** argv) {
  using namespace scene;

  Instance inst;
  inst.id = "demo";
  inst.text = "I love this movie, the cast was great.";
  inst.tokens = {"[CLS]", "i", "love", "this", "movie", ",", "the", "cast", "was", "great", ".", "[SEP]"};
  const std::vector<double> saliency{0.0, 0.1, 0.9, 0.05, 0.3, 0.7, 0.02, 0.2, 0.1, 0.8, 0.6, 0.0};

  // Boundary and punctuation tokens are never candidates.
  const auto eligible = filter_candidates(inst.tokens);
  const auto top = select_top_v(saliency, eligible, 2);
  const auto masked = mask_text(inst, top.selected);
  std::cout << "masked:  " << masked.text << "\n";

  // Stand-in for a masked language model.
  const std::vector<std::vector<ScoredToken>> proposals{
      {{"like", -0.4}, {"love", -0.5}, {"hate", -0.9}, {"!", -1.2}, {"enjoy", -1.3}},
      {{"awesome", -0.3}, {"awful", -0.8}, {"Great", -1.0}, {"mediocre", -1.6}}};
  std::vector<std::vector<std::string>> candidates;
  for (std::size_t m = 0; m < masked.slots.size(); ++m)
    candidates.push_back(filter_substitutes(proposals[m], masked.slots[m].surface));

  const auto set = sample_counterfactuals(masked, candidates, 4, 7);
  for (const auto& cf : set.counterfactuals) std::cout << "  cf:    " << cf.text << "\n";

  // Probability of the original class before and under each counterfactual.
  const std::vector<double> before{0.97};
  const std::vector<std::vector<double>> after{{0.91, 0.12, 0.95, 0.08}};
  std::cout << "validity_soft = " << validity_soft(before, after) << "\n\n";

  const std::string config = argc > 1 ? argv[1] : SCENE_DEMO_CONFIG;
  try {
    const auto run = run_scene(load_config(config));
    std::cout << render_report(run.report, ReportFormat::table_text);
  } catch (const Error& e) {
    std::cerr << "walkthrough: " << e.what() << "\n";
    return 1;
  }
}
