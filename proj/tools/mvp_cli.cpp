// Copyright (C) 2026 The MVP Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line driver: synth, render, train, score, eval, sweep-views, viz.
// Any `--key=value` not consumed by a subcommand overrides the config file.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mvp/pipeline.hpp"

namespace {

std::vector<std::string> overrides_from(const CLI::App* sub) {
  std::vector<std::string> out;
  for (const auto& r : sub->remaining()) {
    if (r.rfind("--", 0) != 0 || r.find('=') == std::string::npos) {
      throw mvp::ConfigError("unexpected argument '" + r + "' (overrides take the form --key=value)");
    }
    out.push_back(r);
  }
  return out;
}

std::vector<std::size_t> parse_views(const std::string& list) {
  std::vector<std::size_t> out;
  for (const auto& s : mvp::detail::split_list(list)) out.push_back(static_cast<std::size_t>(mvp::detail::parse_u64(s)));
  if (out.empty()) throw mvp::ConfigError("empty view list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view projection point cloud anomaly detection"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("-c,--config", config_path, "Config file of `key = value` lines")->check(CLI::ExistingFile);

  auto* synth = app.add_subcommand("synth", "Generate the synthetic benchmark under data_dir");

  auto* render = app.add_subcommand("render", "Render clouds to per-view depth and mask PNGs");
  std::vector<std::string> render_clouds;
  render->add_option("clouds", render_clouds, "Point cloud files (.ply or .xyz)")->required();

  auto* train = app.add_subcommand("train", "Train prompts on the train split");

  std::string checkpoint;
  auto* score = app.add_subcommand("score", "Score one cloud");
  std::string score_cloud, score_category;
  score->add_option("--checkpoint", checkpoint, "Prompt checkpoint (untrained prompts if omitted)");
  score->add_option("--category", score_category, "Category name used when prompt_class = category");
  score->add_option("cloud", score_cloud, "Point cloud file")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a split and write the report");
  std::string split = "test";
  eval->add_option("--checkpoint", checkpoint, "Prompt checkpoint (untrained prompts if omitted)");
  eval->add_option("--split", split, "Manifest split to evaluate");

  auto* sweep = app.add_subcommand("sweep-views", "Metrics, coverage and time per cloud against view count");
  std::string views_list;
  sweep->add_option("--checkpoint", checkpoint, "Prompt checkpoint (untrained prompts if omitted)");
  sweep->add_option("--split", split, "Manifest split to evaluate");
  sweep->add_option("--k", views_list, "Comma-separated view counts (default: sweep_views)");

  auto* viz = app.add_subcommand("viz", "Write a blue-to-red colored PLY from a score file");
  std::string viz_cloud, viz_scores, viz_out;
  viz->add_option("cloud", viz_cloud, "Point cloud file")->required();
  viz->add_option("scores", viz_scores, "Score file, one value per point")->required();
  viz->add_option("output", viz_out, "Output PLY path")->required();

  for (auto* sub : {synth, render, train, score, eval, sweep, viz}) sub->allow_extras();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const mvp::RunConfig cfg = mvp::load_run_config(config_path, overrides_from(sub));
    if (sub == synth) {
      mvp::cmd_synth(cfg);
      std::printf("wrote dataset to %s\n", cfg.data_dir.c_str());
    } else if (sub == render) {
      mvp::cmd_render(cfg, render_clouds);
      std::printf("wrote %zu x %zu views to %s\n", render_clouds.size(), cfg.views, cfg.out_dir.c_str());
    } else if (sub == train) {
      const auto result = mvp::cmd_train(cfg);
      for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
        const auto& l = result.epoch_loss[e];
        std::printf("epoch %zu: iou %.6f focal %.6f ce %.6f total %.6f\n", e, l.iou, l.focal, l.ce, l.total);
      }
    } else if (sub == score) {
      const auto r = mvp::cmd_score(cfg, checkpoint, score_cloud, score_category);
      std::printf("object_score %.6f over %zu points\n", r.score, r.map.size());
    } else if (sub == eval) {
      std::fputs(mvp::cmd_eval(cfg, checkpoint, split).to_table().c_str(), stdout);
    } else if (sub == sweep) {
      mvp::cmd_sweep_views(cfg, checkpoint, views_list.empty() ? cfg.sweep_views : parse_views(views_list), split);
      std::fputs(mvp::read_file(std::filesystem::path(cfg.out_dir) / "sweep_views.txt").c_str(), stdout);
    } else if (sub == viz) {
      mvp::cmd_viz(cfg, viz_cloud, viz_scores, viz_out);
      std::printf("wrote %s\n", viz_out.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "mvp: error: %s\n", e.what());
    return 1;
  }
  return 0;
}
