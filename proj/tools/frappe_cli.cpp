// Copyright 2026 The frappe-kit Authors
// SPDX-License-Identifier: Apache-2.0

// frappe-kit command-line front end. Links only the C interface.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "frappe/frappe.h"

namespace fs = std::filesystem;

namespace {

constexpr const char* kCommands[][2] = {
    {"synth", "Generate a synthetic two-group dataset"},
    {"train-base", "Fit a base model on the prediction loss"},
    {"train", "Fit in-processing or post-hoc models for each lambda"},
    {"sweep", "Run the lambda x repeat grid and write the tradeoff tables"},
    {"eval", "Evaluate a saved model"},
    {"verify-glm", "Check the in-/post-processing identity for GLMs"},
    {"analyze-posthoc", "Spearman analysis of a trained post-hoc module"},
    {"baseline-naive", "Randomized favorable-outcome baseline"},
};

int report_error(const std::string& message) {
  std::cerr << "frappe-kit: " << message << "\n";
  return FRAPPE_ERROR_CONFIG;
}

std::optional<std::string> read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"frappe-kit: fairness post-processing from in-processing objectives"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  unsigned workers = 1;
  if (const char* env = std::getenv("FRAPPE_KIT_WORKERS")) {
    try {
      workers = static_cast<unsigned>(std::stoul(env));
    } catch (const std::exception&) {
      return report_error(std::string("FRAPPE_KIT_WORKERS is not a number: ") + env);
    }
  }

  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "Output directory (default: output.directory next to the config, or ./out)");
  app.add_option("--seed", seed, "Master seed (overrides train.seed)");
  app.add_option("--workers", workers, "Concurrent sweep runs (default $FRAPPE_KIT_WORKERS or 1)")
      ->check(CLI::PositiveNumber);
  app.add_flag_function("--version", [](std::int64_t) {
    std::cout << "frappe-kit " << frappe_version() << "\n";
    std::exit(0);
  }, "Print the version");

  for (const auto& [name, help] : kCommands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : FRAPPE_ERROR_CONFIG;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  std::string config_text = "{}";
  fs::path base_dir = ".";
  if (!config_path.empty()) {
    auto text = read_text(config_path);
    if (!text) return report_error("cannot read config '" + config_path + "'");
    config_text = *text;
    base_dir = fs::absolute(config_path).parent_path();
  }
  if (out_dir.empty()) {
    out_dir = "out";
    const auto doc = nlohmann::json::parse(config_text, nullptr, false);
    if (doc.is_object() && doc.contains("output") && doc["output"].is_object() &&
        doc["output"].contains("directory") && doc["output"]["directory"].is_string())
      out_dir = (base_dir / doc["output"]["directory"].get<std::string>()).string();
  }

  const std::string base_dir_str = base_dir.string();
  frappe_run_options options{base_dir_str.c_str(), seed.value_or(0), seed ? 1 : 0, workers};
  frappe_run* run = nullptr;
  const frappe_status status = frappe_run_command(command.c_str(), config_text.c_str(), &options, &run);
  if (!run) {
    std::cerr << "frappe-kit " << command << ": " << frappe_last_error_kind() << ": "
              << frappe_last_error_message() << "\n";
    return status;
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    frappe_run_free(run);
    return report_error("cannot create output directory '" + out_dir + "': " + ec.message());
  }
  for (size_t i = 0; i < frappe_run_artifact_count(run); ++i) {
    size_t size = 0;
    const char* data = frappe_run_artifact_data(run, i, &size);
    const fs::path target = fs::path(out_dir) / frappe_run_artifact_name(run, i);
    std::ofstream file(target, std::ios::binary);
    if (!file || !file.write(data, static_cast<std::streamsize>(size))) {
      frappe_run_free(run);
      return report_error("cannot write '" + target.string() + "'");
    }
  }
  std::cout << frappe_run_summary(run);
  const std::string summary = frappe_run_summary(run);
  if (!summary.empty() && summary.back() != '\n') std::cout << "\n";
  if (status != FRAPPE_OK) std::cerr << "frappe-kit " << command << ": " << frappe_last_error_message() << "\n";
  frappe_run_free(run);
  return status;
}
