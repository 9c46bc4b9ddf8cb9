// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdbench/provenance.hpp"

#include <Eigen/Core>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <sys/utsname.h>
#include <unistd.h>

#include <chrono>
#include <ctime>
#include <thread>

#ifndef QDBENCH_GIT_COMMIT
#define QDBENCH_GIT_COMMIT "unknown"
#endif

namespace qdbench {

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  std::string out;
  for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", digest[i]);
  return out;
}

std::string source_commit() {
  const std::string c = QDBENCH_GIT_COMMIT;
  return c.empty() ? "unknown" : c;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string provenance_json(const ExperimentConfig& config, const std::string& resolved_yaml) {
  nlohmann::json j;
  j["experiment_id"] = config.experiment_id;
  j["config_sha256"] = sha256_hex(resolved_yaml);
  j["config"] = resolved_yaml;
  j["created_utc"] = utc_timestamp();
  j["git_commit"] = source_commit();

  nlohmann::json seeds;
  seeds["global"] = config.seed;
  seeds["fold_seed_rule"] = "derive_seed(global, fold)";
  j["seeds"] = seeds;

  nlohmann::json families = nlohmann::json::object();
  for (Family f : config.families) {
    const TrainConfig t = config.train_config(f, config.budgets.front(), config.normalizations.front());
    families[std::string(to_string(f))] = {
        {"learning_rate", t.learning_rate}, {"weight_decay", t.weight_decay},
        {"scheduler", std::string(to_string(t.scheduler))}, {"max_epochs", t.max_epochs},
        {"patience", t.patience}, {"batch_size", t.batch_size},
        {"dropout", model_spec_for(t).dropout}, {"min_delta", t.min_delta},
        {"time_budget_s", t.time_budget_s},
        {"optimizer", {{"name", "adamw"}, {"beta1", t.beta1}, {"beta2", t.beta2}, {"eps", t.eps}}}};
  }
  j["training"] = families;

  nlohmann::json sw;
#if defined(__clang__)
  sw["compiler"] = fmt::format("clang {}.{}.{}", __clang_major__, __clang_minor__, __clang_patchlevel__);
#elif defined(__GNUC__)
  sw["compiler"] = fmt::format("gcc {}.{}.{}", __GNUC__, __GNUC_MINOR__, __GNUC_PATCHLEVEL__);
#else
  sw["compiler"] = "unknown";
#endif
  sw["cxx_standard"] = __cplusplus;
  sw["eigen"] = fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION);
#ifdef NDEBUG
  sw["build"] = "release";
#else
  sw["build"] = "debug";
#endif
#ifdef QDBENCH_VERSION
  sw["qdbench"] = QDBENCH_VERSION;
#endif
  j["software"] = sw;

  nlohmann::json host;
  utsname u{};
  if (uname(&u) == 0) {
    host["system"] = u.sysname;
    host["release"] = u.release;
    host["machine"] = u.machine;
    host["hostname"] = u.nodename;
  }
  host["hardware_threads"] = std::thread::hardware_concurrency();
  j["host"] = host;
  return j.dump(2) + "\n";
}

}  // namespace qdbench
