// Copyright 2026 The frappe-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "frappe/frappe.h"

#include <cmath>
#include <cstring>
#include <new>
#include <string>
#include <vector>

#include "frappe/error.hpp"
#include "frappe/experiment.hpp"
#include "frappe/metrics.hpp"

struct frappe_dataset {
  frappe::DatasetTable table;
};

struct frappe_module {
  frappe::ScoreModule module;
};

struct frappe_run {
  frappe::CommandResult result;
};

namespace {

thread_local std::string last_message;
thread_local std::string last_kind;

frappe_status status_for(frappe::ErrorKind kind) {
  using frappe::ErrorKind;
  switch (kind) {
    case ErrorKind::Diverged:
    case ErrorKind::EmptyGroup:
    case ErrorKind::InsufficientSample:
    case ErrorKind::InnerNotConverged:
      return FRAPPE_ERROR_NUMERIC;
    default:
      return FRAPPE_ERROR_CONFIG;
  }
}

template <typename Fn>
frappe_status guarded(Fn&& fn) {
  last_message.clear();
  last_kind.clear();
  try {
    return fn();
  } catch (const frappe::Error& e) {
    last_message = e.what();
    last_kind = frappe::error_kind_name(e.kind());
    return status_for(e.kind());
  } catch (const nlohmann::json::exception& e) {
    last_message = std::string("invalid JSON: ") + e.what();
    last_kind = "ConfigError";
    return FRAPPE_ERROR_CONFIG;
  } catch (const std::bad_alloc&) {
    last_message = "out of memory";
    last_kind = "InternalError";
    return FRAPPE_ERROR_INTERNAL;
  } catch (const std::exception& e) {
    last_message = e.what();
    last_kind = "InternalError";
    return FRAPPE_ERROR_INTERNAL;
  }
}

frappe_status null_argument(const char* name) {
  last_message = std::string("null argument: ") + name;
  last_kind = "ConfigError";
  return FRAPPE_ERROR_CONFIG;
}

char* copy_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

nlohmann::json parse_json(const char* text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    frappe::fail(frappe::ErrorKind::Config, std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace

extern "C" {

const char* frappe_version(void) { return "0.1.0"; }
const char* frappe_last_error_message(void) { return last_message.c_str(); }
const char* frappe_last_error_kind(void) { return last_kind.c_str(); }
void frappe_string_free(char* str) { delete[] str; }

frappe_status frappe_dataset_load_csv(const char* path, const char* schema_json, frappe_dataset** out) {
  if (!path) return null_argument("path");
  if (!schema_json) return null_argument("schema_json");
  if (!out) return null_argument("out");
  return guarded([&] {
    const nlohmann::json doc = {{"data", {{"path", path}, {"schema", parse_json(schema_json)}}}};
    const frappe::RunConfig c = frappe::RunConfig::parse(doc);
    *out = new frappe_dataset{frappe::load_dataset(c.data, ".")};
    return FRAPPE_OK;
  });
}

frappe_status frappe_dataset_synth(const char* spec_json, frappe_dataset** out) {
  if (!spec_json) return null_argument("spec_json");
  if (!out) return null_argument("out");
  return guarded([&] {
    const nlohmann::json doc = {{"data", {{"synth", parse_json(spec_json)}}}};
    const frappe::RunConfig c = frappe::RunConfig::parse(doc);
    *out = new frappe_dataset{frappe::synth_two_group(*c.data.synth)};
    return FRAPPE_OK;
  });
}

frappe_status frappe_dataset_write_csv(const frappe_dataset* data, const char* path) {
  if (!data) return null_argument("data");
  if (!path) return null_argument("path");
  return guarded([&] {
    frappe::write_csv(data->table, path);
    return FRAPPE_OK;
  });
}

size_t frappe_dataset_rows(const frappe_dataset* data) { return data ? data->table.rows() : 0; }
size_t frappe_dataset_cols(const frappe_dataset* data) { return data ? data->table.cols() : 0; }
size_t frappe_dataset_annotated(const frappe_dataset* data) {
  return data ? data->table.annotated_count() : 0;
}

frappe_status frappe_dataset_subsample_sensitive(const frappe_dataset* data, double fraction,
                                                 uint64_t seed, frappe_dataset** out) {
  if (!data) return null_argument("data");
  if (!out) return null_argument("out");
  return guarded([&] {
    *out = new frappe_dataset{frappe::subsample_sensitive(data->table, fraction, seed)};
    return FRAPPE_OK;
  });
}

void frappe_dataset_free(frappe_dataset* data) { delete data; }

frappe_status frappe_module_from_json(const char* json, frappe_module** out) {
  if (!json) return null_argument("json");
  if (!out) return null_argument("out");
  return guarded([&] {
    *out = new frappe_module{frappe::ScoreModule::from_json(parse_json(json))};
    return FRAPPE_OK;
  });
}

frappe_status frappe_module_to_json(const frappe_module* module, char** out) {
  if (!module) return null_argument("module");
  if (!out) return null_argument("out");
  return guarded([&] {
    *out = copy_string(module->module.to_json().dump());
    return FRAPPE_OK;
  });
}

size_t frappe_module_parameter_count(const frappe_module* module) {
  return module ? module->module.parameter_count() : 0;
}

frappe_status frappe_module_forward(const frappe_module* module, const frappe_dataset* data,
                                    double* scores, size_t n) {
  if (!module) return null_argument("module");
  if (!data) return null_argument("data");
  if (!scores) return null_argument("scores");
  return guarded([&] {
    if (n < data->table.rows())
      frappe::fail(frappe::ErrorKind::Dim, "score buffer holds " + std::to_string(n) + " values, need " +
                                               std::to_string(data->table.rows()));
    const Eigen::VectorXd s = module->module.forward(data->table.features);
    std::copy(s.data(), s.data() + s.size(), scores);
    return FRAPPE_OK;
  });
}

void frappe_module_free(frappe_module* module) { delete module; }

frappe_status frappe_metrics_json(const double* predictions, const double* labels,
                                  const double* sensitive, size_t n, char** out_json) {
  if (!predictions) return null_argument("predictions");
  if (!labels) return null_argument("labels");
  if (!sensitive) return null_argument("sensitive");
  if (!out_json) return null_argument("out_json");
  return guarded([&] {
    const auto size = static_cast<Eigen::Index>(n);
    const Eigen::VectorXd pred = Eigen::Map<const Eigen::VectorXd>(predictions, size);
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(labels, size);
    std::vector<std::optional<double>> a(n);
    for (size_t i = 0; i < n; ++i)
      if (!std::isnan(sensitive[i])) a[i] = sensitive[i];
    const nlohmann::json doc = {
        {"error", frappe::prediction_error(pred, y, frappe::TaskKind::binary_classification)},
        {"fpr_gap", frappe::fpr_gap(pred, y, a)},
        {"sp_gap", frappe::sp_gap(pred, a)},
        {"meo", frappe::meo(pred, y, a)}};
    *out_json = copy_string(doc.dump());
    return FRAPPE_OK;
  });
}

frappe_status frappe_run_command(const char* command, const char* config_json,
                                 const frappe_run_options* options, frappe_run** out) {
  if (!command) return null_argument("command");
  if (!config_json) return null_argument("config_json");
  if (!out) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    frappe::CommandOptions opts;
    if (options) {
      if (options->base_dir) opts.base_dir = options->base_dir;
      if (options->has_seed) opts.seed = options->seed;
      opts.workers = options->workers == 0 ? 1 : options->workers;
    }
    auto* run = new frappe_run{frappe::run_command(command, parse_json(config_json), opts)};
    *out = run;
    switch (run->result.status) {
      case frappe::RunStatus::partial_failure:
        last_message = run->result.summary;
        last_kind = "PartialFailure";
        return FRAPPE_ERROR_PARTIAL;
      case frappe::RunStatus::verification_failed:
        last_message = run->result.summary;
        last_kind = "VerificationFailed";
        return FRAPPE_ERROR_VERIFICATION;
      default:
        return FRAPPE_OK;
    }
  });
}

size_t frappe_run_artifact_count(const frappe_run* run) {
  return run ? run->result.artifacts.size() : 0;
}

const char* frappe_run_artifact_name(const frappe_run* run, size_t index) {
  if (!run || index >= run->result.artifacts.size()) return nullptr;
  return run->result.artifacts[index].name.c_str();
}

const char* frappe_run_artifact_data(const frappe_run* run, size_t index, size_t* size) {
  if (!run || index >= run->result.artifacts.size()) return nullptr;
  const auto& data = run->result.artifacts[index].data;
  if (size) *size = data.size();
  return data.data();
}

const char* frappe_run_summary(const frappe_run* run) { return run ? run->result.summary.c_str() : ""; }

void frappe_run_free(frappe_run* run) { delete run; }

}  // extern "C"
