// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "topics/corpus.hpp"
#include "topics/dtm.hpp"
#include "topics/eval.hpp"
#include "topics/lda.hpp"
#include "topics/matrix.hpp"

namespace topics {

// Model dumps come in two equivalent forms: a JSON object with row-major
// matrices, and a binary file framed like the corpus cache (4-byte magic,
// version byte, length-prefixed arrays).
inline constexpr char kModelMagic[4] = {'T', 'O', 'P', 'M'};
inline constexpr std::uint8_t kModelVersion = 1;
inline constexpr std::uint8_t kModelKindLda = 0;
inline constexpr std::uint8_t kModelKindDtm = 1;

struct LdaDump {
  LdaHyper hyper;
  LdaModel model;
};

struct DtmDump {
  DtmHyper hyper;
  DtmModel model;
};

inline nlohmann::json to_json(const LdaDump& dump) {
  return nlohmann::json{{"K", dump.hyper.k},
                        {"alpha", dump.hyper.alpha},
                        {"beta", dump.hyper.beta},
                        {"theta", dump.model.theta.data()},
                        {"phi", dump.model.phi.data()}};
}

inline nlohmann::json to_json(const DtmDump& dump) {
  return nlohmann::json{{"Kr", dump.hyper.kr},
                        {"Kc", dump.hyper.kc},
                        {"alpha", dump.hyper.alpha},
                        {"beta_r", dump.hyper.beta_r},
                        {"beta_c", dump.hyper.beta_c},
                        {"theta", dump.model.theta.data()},
                        {"phi_r", dump.model.phi_r.data()},
                        {"phi_c", dump.model.phi_c.data()}};
}

namespace detail {

inline Matrix<double> matrix_from_flat(const std::vector<double>& flat,
                                       std::size_t rows, std::size_t cols,
                                       const char* name) {
  if (flat.size() != rows * cols)
    throw std::runtime_error(std::string("model dump: ") + name +
                             " has wrong length");
  Matrix<double> m(rows, cols);
  m.data() = flat;
  return m;
}

}  // namespace detail

inline LdaDump lda_from_json(const nlohmann::json& j) {
  LdaDump dump;
  dump.hyper.k = j.at("K").get<std::size_t>();
  dump.hyper.alpha = j.at("alpha").get<double>();
  dump.hyper.beta = j.at("beta").get<double>();
  const auto theta = j.at("theta").get<std::vector<double>>();
  const auto phi = j.at("phi").get<std::vector<double>>();
  if (dump.hyper.k == 0 || theta.size() % dump.hyper.k != 0 ||
      phi.size() % dump.hyper.k != 0)
    throw std::runtime_error("model dump: dimensions do not divide K");
  dump.model.theta = detail::matrix_from_flat(
      theta, theta.size() / dump.hyper.k, dump.hyper.k, "theta");
  dump.model.phi = detail::matrix_from_flat(phi, dump.hyper.k,
                                            phi.size() / dump.hyper.k, "phi");
  return dump;
}

inline DtmDump dtm_from_json(const nlohmann::json& j) {
  DtmDump dump;
  dump.hyper.kr = j.at("Kr").get<std::size_t>();
  dump.hyper.kc = j.at("Kc").get<std::size_t>();
  dump.hyper.alpha = j.at("alpha").get<double>();
  dump.hyper.beta_r = j.at("beta_r").get<double>();
  dump.hyper.beta_c = j.at("beta_c").get<double>();
  const auto theta = j.at("theta").get<std::vector<double>>();
  const auto phi_r = j.at("phi_r").get<std::vector<double>>();
  const auto phi_c = j.at("phi_c").get<std::vector<double>>();
  if (dump.hyper.kr == 0 || dump.hyper.kc == 0 ||
      theta.size() != dump.hyper.kr * dump.hyper.kc ||
      phi_r.size() % dump.hyper.kr != 0 || phi_c.size() % dump.hyper.kc != 0)
    throw std::runtime_error("model dump: inconsistent dimensions");
  dump.model.theta =
      detail::matrix_from_flat(theta, dump.hyper.kr, dump.hyper.kc, "theta");
  dump.model.phi_r = detail::matrix_from_flat(
      phi_r, dump.hyper.kr, phi_r.size() / dump.hyper.kr, "phi_r");
  dump.model.phi_c = detail::matrix_from_flat(
      phi_c, dump.hyper.kc, phi_c.size() / dump.hyper.kc, "phi_c");
  return dump;
}

inline void save_model_json(const LdaDump& dump, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json(dump).dump(2) << "\n";
}

inline void save_model_json(const DtmDump& dump, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json(dump).dump(2) << "\n";
}

namespace detail {

inline void write_vector(std::ostream& out, const std::vector<double>& v) {
  write_raw<std::uint64_t>(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline std::vector<double> read_vector(std::istream& in) {
  const auto n = read_raw<std::uint64_t>(in);
  std::vector<double> v(n);
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw std::runtime_error("truncated binary input");
  return v;
}

}  // namespace detail

inline void save_model_binary(const LdaDump& dump, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kModelMagic, 4);
  detail::write_raw(out, kModelVersion);
  detail::write_raw(out, kModelKindLda);
  detail::write_raw<std::uint64_t>(out, dump.hyper.k);
  detail::write_raw<double>(out, dump.hyper.alpha);
  detail::write_raw<double>(out, dump.hyper.beta);
  detail::write_raw<std::uint64_t>(out, dump.model.theta.rows());
  detail::write_raw<std::uint64_t>(out, dump.model.phi.cols());
  detail::write_vector(out, dump.model.theta.data());
  detail::write_vector(out, dump.model.phi.data());
}

inline void save_model_binary(const DtmDump& dump, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kModelMagic, 4);
  detail::write_raw(out, kModelVersion);
  detail::write_raw(out, kModelKindDtm);
  detail::write_raw<std::uint64_t>(out, dump.hyper.kr);
  detail::write_raw<std::uint64_t>(out, dump.hyper.kc);
  detail::write_raw<double>(out, dump.hyper.alpha);
  detail::write_raw<double>(out, dump.hyper.beta_r);
  detail::write_raw<double>(out, dump.hyper.beta_c);
  detail::write_raw<std::uint64_t>(out, dump.model.phi_r.cols());
  detail::write_raw<std::uint64_t>(out, dump.model.phi_c.cols());
  detail::write_vector(out, dump.model.theta.data());
  detail::write_vector(out, dump.model.phi_r.data());
  detail::write_vector(out, dump.model.phi_c.data());
}

// A loaded dump is one of the two model kinds.
struct AnyModel {
  bool is_dtm = false;
  LdaDump lda;
  DtmDump dtm;
};

inline AnyModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char first = 0;
  in.get(first);
  in.seekg(0);
  AnyModel any;
  if (first == '{' || first == '[' || first == ' ' || first == '\n') {
    nlohmann::json j;
    in >> j;
    if (j.contains("Kr")) {
      any.is_dtm = true;
      any.dtm = dtm_from_json(j);
    } else {
      any.lda = lda_from_json(j);
    }
    return any;
  }
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kModelMagic, 4) != 0)
    throw std::runtime_error("unrecognized model file " + path);
  const auto version = detail::read_raw<std::uint8_t>(in);
  if (version != kModelVersion)
    throw std::runtime_error("unsupported model version " +
                             std::to_string(version));
  const auto kind = detail::read_raw<std::uint8_t>(in);
  if (kind == kModelKindLda) {
    LdaDump& d = any.lda;
    d.hyper.k = detail::read_raw<std::uint64_t>(in);
    d.hyper.alpha = detail::read_raw<double>(in);
    d.hyper.beta = detail::read_raw<double>(in);
    const auto num_docs = detail::read_raw<std::uint64_t>(in);
    const auto vocab = detail::read_raw<std::uint64_t>(in);
    d.model.theta = detail::matrix_from_flat(detail::read_vector(in), num_docs,
                                             d.hyper.k, "theta");
    d.model.phi = detail::matrix_from_flat(detail::read_vector(in), d.hyper.k,
                                           vocab, "phi");
  } else if (kind == kModelKindDtm) {
    any.is_dtm = true;
    DtmDump& d = any.dtm;
    d.hyper.kr = detail::read_raw<std::uint64_t>(in);
    d.hyper.kc = detail::read_raw<std::uint64_t>(in);
    d.hyper.alpha = detail::read_raw<double>(in);
    d.hyper.beta_r = detail::read_raw<double>(in);
    d.hyper.beta_c = detail::read_raw<double>(in);
    const auto num_rows = detail::read_raw<std::uint64_t>(in);
    const auto num_cols = detail::read_raw<std::uint64_t>(in);
    d.model.theta = detail::matrix_from_flat(detail::read_vector(in),
                                             d.hyper.kr, d.hyper.kc, "theta");
    d.model.phi_r = detail::matrix_from_flat(detail::read_vector(in),
                                             d.hyper.kr, num_rows, "phi_r");
    d.model.phi_c = detail::matrix_from_flat(detail::read_vector(in),
                                             d.hyper.kc, num_cols, "phi_c");
  } else {
    throw std::runtime_error("unknown model kind in " + path);
  }
  return any;
}

// Trace CSV: header "iteration,perplexity", one row per iteration.
inline void save_trace_csv(const PerplexityTrace& trace,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "iteration,perplexity\n";
  std::ostringstream row;
  row.precision(17);
  for (const auto& [iter, value] : trace.points) {
    row.str("");
    row << iter << "," << value << "\n";
    out << row.str();
  }
}

inline PerplexityTrace load_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) ||
      detail::strip(line) != "iteration,perplexity")
    throw std::runtime_error("bad trace header in " + path);
  PerplexityTrace trace;
  while (std::getline(in, line)) {
    const std::string body = detail::strip(line);
    if (body.empty()) continue;
    const std::size_t comma = body.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error("bad trace row in " + path);
    trace.points.emplace_back(std::stoull(body.substr(0, comma)),
                              std::stod(body.substr(comma + 1)));
  }
  return trace;
}

// Coherence CSV: per-topic section under "topic,metric,score", then an
// aggregate section under "metric,mean,max,min".
inline void save_coherence_csv(const std::vector<CoherenceReport>& reports,
                               const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  out << "topic,metric,score\n";
  for (const CoherenceReport& report : reports)
    for (std::size_t t = 0; t < report.per_topic.size(); ++t)
      out << t << "," << to_string(report.metric) << ","
          << report.per_topic[t] << "\n";
  out << "metric,mean,max,min\n";
  for (const CoherenceReport& report : reports)
    out << to_string(report.metric) << "," << report.mean << "," << report.max
        << "," << report.min << "\n";
}

}  // namespace topics
