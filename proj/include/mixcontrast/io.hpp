#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "mixcontrast/contrast.hpp"
#include "mixcontrast/em.hpp"
#include "mixcontrast/errors.hpp"
#include "mixcontrast/mixture_model.hpp"
#include "mixcontrast/permutation.hpp"

namespace mixcontrast {

inline constexpr const char* kVersion = "0.1.0";

// FNV-1a 64-bit digest of a file's bytes, rendered as hex.
inline std::string file_digest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open file for digest: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (f) {
    f.read(buf, sizeof(buf));
    const std::streamsize got = f.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

inline std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---- model JSON + tau TSV ---------------------------------------------------

inline void save_tau_tsv(const Eigen::MatrixXd& tau, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write tau file: " + path);
  for (Eigen::Index j = 0; j < tau.rows(); ++j) {
    for (Eigen::Index i = 0; i < tau.cols(); ++i) {
      if (i) f << '\t';
      f << fmt_g17(tau(j, i));
    }
    f << '\n';
  }
}

inline Eigen::MatrixXd load_tau_tsv(const std::string& path, Eigen::Index g) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open tau file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::vector<double> row;
    double v = 0.0;
    while (ss >> v) row.push_back(v);
    if (static_cast<Eigen::Index>(row.size()) != g) {
      throw DataError("tau file column count does not match g");
    }
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd tau(static_cast<Eigen::Index>(rows.size()), g);
  for (Eigen::Index j = 0; j < tau.rows(); ++j) {
    for (Eigen::Index i = 0; i < g; ++i) tau(j, i) = rows[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
  }
  return tau;
}

inline void save_model(const MixtureModel& model, const std::string& json_path,
                       const std::string& tau_path, const std::string& data_digest,
                       std::uint64_t seed) {
  nlohmann::json doc;
  doc["g"] = model.g;
  doc["log_likelihood"] = model.log_likelihood;
  doc["bic"] = model.bic;
  doc["tau_path"] = tau_path;
  doc["data_digest"] = data_digest;
  doc["seed"] = seed;
  doc["version"] = kVersion;
  doc["components"] = nlohmann::json::array();
  for (const auto& comp : model.components) {
    nlohmann::json c;
    c["pi"] = comp.pi;
    c["beta"] = std::vector<double>(comp.beta.data(), comp.beta.data() + comp.beta.size());
    c["sigma_b"] = std::vector<double>(comp.sigma_b.data(), comp.sigma_b.data() + comp.sigma_b.size());
    c["rho"] = comp.rho;
    c["sigma_c_sq"] = comp.sigma_c_sq;
    c["sigma_e_sq"] = comp.sigma_e_sq;
    doc["components"].push_back(std::move(c));
  }
  doc["c_hat"] = nlohmann::json::array();
  for (int i = 0; i < model.g; ++i) {
    std::vector<double> row(model.c_hat.cols() > 0 ? static_cast<std::size_t>(model.c_hat.cols()) : 0);
    for (Eigen::Index s = 0; s < model.c_hat.cols(); ++s) row[static_cast<std::size_t>(s)] = model.c_hat(i, s);
    doc["c_hat"].push_back(std::move(row));
  }
  doc["z_map"] = std::vector<int>(model.z_map.data(), model.z_map.data() + model.z_map.size());
  std::ofstream f(json_path);
  if (!f) throw DataError("cannot write model file: " + json_path);
  f << doc.dump(2) << '\n';
  save_tau_tsv(model.tau, tau_path);
}

// class_of_sample must come from the matching data file.
inline MixtureModel load_model(const std::string& json_path,
                               const std::vector<int>& class_of_sample,
                               std::string* data_digest = nullptr) {
  std::ifstream f(json_path);
  if (!f) throw DataError("cannot open model file: " + json_path);
  nlohmann::json doc;
  try {
    f >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed model JSON: " + std::string(e.what()));
  }

  MixtureModel model;
  model.g = doc.at("g").get<int>();
  model.log_likelihood = doc.at("log_likelihood").get<double>();
  model.bic = doc.at("bic").get<double>();
  model.design = build_design_matrices(class_of_sample);
  if (data_digest) *data_digest = doc.value("data_digest", "");

  for (const auto& c : doc.at("components")) {
    ComponentParams comp;
    comp.pi = c.at("pi").get<double>();
    const auto beta = c.at("beta").get<std::vector<double>>();
    const auto sb = c.at("sigma_b").get<std::vector<double>>();
    comp.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    comp.sigma_b = Eigen::Map<const Eigen::VectorXd>(sb.data(), static_cast<Eigen::Index>(sb.size()));
    comp.rho = c.at("rho").get<double>();
    comp.sigma_c_sq = c.at("sigma_c_sq").get<double>();
    comp.sigma_e_sq = c.at("sigma_e_sq").get<double>();
    model.components.push_back(std::move(comp));
  }
  model.c_hat.resize(model.g, model.p());
  const auto& ch = doc.at("c_hat");
  for (int i = 0; i < model.g; ++i) {
    const auto row = ch.at(static_cast<std::size_t>(i)).get<std::vector<double>>();
    model.c_hat.row(i) = Eigen::Map<const Eigen::RowVectorXd>(row.data(), static_cast<Eigen::Index>(row.size()));
  }
  const auto zm = doc.at("z_map").get<std::vector<int>>();
  model.z_map = Eigen::Map<const Eigen::VectorXi>(zm.data(), static_cast<Eigen::Index>(zm.size()));
  model.n_map = Eigen::VectorXi::Zero(model.g);
  for (int z : zm) model.n_map[z]++;

  model.tau = load_tau_tsv(doc.at("tau_path").get<std::string>(), model.g);
  return model;
}

// ---- stage tables -----------------------------------------------------------

inline void save_bic_table(const std::vector<GBicRow>& table, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write BIC table: " + path);
  f << "g\tloglik\tbic\tconverged\titers\n";
  for (const auto& row : table) {
    if (row.failed) {
      f << row.g << "\tfailed\tfailed\t0\t0\n";
    } else {
      f << row.g << '\t' << fmt_g17(row.log_likelihood) << '\t' << fmt_g17(row.bic)
        << '\t' << (row.converged ? 1 : 0) << '\t' << row.iterations << '\n';
    }
  }
}

// Ranked output: feature_id, rank, W, direction, map_cluster, tau_1..tau_g.
inline void save_ranked_tsv(const std::vector<RankedGene>& ranked,
                            const std::vector<std::string>& feature_ids,
                            const Eigen::VectorXi& z_map, const Eigen::MatrixXd& tau,
                            const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write ranked file: " + path);
  f << "feature_id\trank\tW\tdirection\tmap_cluster";
  for (Eigen::Index i = 0; i < tau.cols(); ++i) f << "\ttau_" << (i + 1);
  f << '\n';
  for (const auto& r : ranked) {
    f << feature_ids[static_cast<std::size_t>(r.feature)] << '\t' << r.rank << '\t'
      << fmt_g17(r.w) << '\t' << (r.up ? "up" : "down") << '\t'
      << (z_map[r.feature] + 1);
    for (Eigen::Index i = 0; i < tau.cols(); ++i) f << '\t' << fmt_g17(tau(r.feature, i));
    f << '\n';
  }
}

// Generic score reader: feature_id column plus a named numeric column.
struct ScoreFile {
  std::vector<std::string> feature_ids;
  std::vector<double> scores;
};

inline ScoreFile load_score_file(const std::string& path, const std::string& column = "W") {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open score file: " + path);
  std::string line;
  if (!std::getline(f, line)) throw DataError("empty score file: " + path);
  const auto header = detail::split_tabs(line);
  std::size_t col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == column) col = i;
  }
  if (col == header.size()) throw DataError("score file lacks a '" + column + "' column: " + path);
  ScoreFile out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto parts = detail::split_tabs(line);
    if (parts.size() <= col) throw DataError("malformed score line: " + line);
    out.feature_ids.push_back(parts[0]);
    out.scores.push_back(std::stod(parts[col]));
  }
  return out;
}

// ---- run manifest -----------------------------------------------------------

struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, digest
  double wall_time_sec = 0.0;
};

inline void save_manifest(const RunManifest& manifest, const std::string& path) {
  nlohmann::json doc;
  doc["command"] = manifest.command;
  doc["config"] = manifest.config;
  doc["seed"] = manifest.seed;
  doc["version"] = kVersion;
  doc["inputs"] = nlohmann::json::object();
  for (const auto& [in_path, digest] : manifest.inputs) doc["inputs"][in_path] = digest;
  doc["wall_time_sec"] = manifest.wall_time_sec;
  std::ofstream f(path);
  if (!f) throw DataError("cannot write manifest: " + path);
  f << doc.dump(2) << '\n';
}

}  // namespace mixcontrast
