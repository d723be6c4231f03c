#include "dynlearn/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace dynlearn {

namespace {

std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  return fields;
}

}  // namespace

void TransitionDataset::validate() const {
  require(n >= 1 && m_u >= 1, "TransitionDataset: dims must be >= 1");
  for (const auto& s : samples) {
    require(s.q.size() == n && s.w.size() == n && s.u.size() == m_u,
            "TransitionDataset: sample dims inconsistent");
    require(s.dt > 0.0, "TransitionDataset: sample dt must be > 0");
    if (kind == ModelKind::LNN)
      require(s.label_w.size() == n && s.label_q.size() == 0,
              "TransitionDataset: LNN samples label qd_{k+1} only");
    else
      require(s.label_w.size() == n && s.label_q.size() == n,
              "TransitionDataset: HNN samples label (q, p)_{k+1}");
  }
}

std::pair<TransitionDataset, TransitionDataset> split_dataset(const TransitionDataset& dataset,
                                                              double val_fraction,
                                                              std::uint64_t seed) {
  require(val_fraction >= 0.0 && val_fraction < 1.0,
          "split_dataset: val_fraction must be in [0, 1)");
  std::set<int> ids;
  for (const auto& s : dataset.samples) ids.insert(s.trajectory_id);
  std::vector<int> order(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  size_t n_val = static_cast<size_t>(val_fraction * static_cast<double>(order.size()));
  if (n_val == 0 && val_fraction > 0.0 && order.size() > 1) n_val = 1;
  std::set<int> val_ids(order.begin(), order.begin() + static_cast<long>(n_val));

  TransitionDataset train = dataset;
  TransitionDataset val = dataset;
  train.samples.clear();
  val.samples.clear();
  train.split_seed = val.split_seed = seed;
  for (const auto& s : dataset.samples)
    (val_ids.count(s.trajectory_id) ? val : train).samples.push_back(s);
  return {std::move(train), std::move(val)};
}

void save_dataset_csv(const TransitionDataset& dataset, const std::string& path) {
  dataset.validate();
  std::ofstream out(path);
  if (!out) throw IoError("save_dataset_csv: cannot open " + path);

  const bool hnn = dataset.kind == ModelKind::HNN;
  out << "trajectory_id";
  for (int i = 0; i < dataset.n; ++i) out << ",q" << i;
  for (int i = 0; i < dataset.n; ++i) out << "," << (hnn ? "p" : "qd") << i;
  for (int i = 0; i < dataset.m_u; ++i) out << ",u" << i;
  out << ",dt";
  if (hnn) {
    for (int i = 0; i < dataset.n; ++i) out << ",label_q" << i;
    for (int i = 0; i < dataset.n; ++i) out << ",label_p" << i;
  } else {
    for (int i = 0; i < dataset.n; ++i) out << ",label_qd" << i;
  }
  out << "\n";

  for (const auto& s : dataset.samples) {
    out << s.trajectory_id;
    for (int i = 0; i < dataset.n; ++i) out << ',' << fmt_double(s.q[i]);
    for (int i = 0; i < dataset.n; ++i) out << ',' << fmt_double(s.w[i]);
    for (int i = 0; i < dataset.m_u; ++i) out << ',' << fmt_double(s.u[i]);
    out << ',' << fmt_double(s.dt);
    if (hnn)
      for (int i = 0; i < dataset.n; ++i) out << ',' << fmt_double(s.label_q[i]);
    for (int i = 0; i < dataset.n; ++i) out << ',' << fmt_double(s.label_w[i]);
    out << "\n";
  }
}

TransitionDataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_dataset_csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw IoError("load_dataset_csv: empty file " + path);
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "trajectory_id")
    throw IoError("load_dataset_csv: header row with trajectory_id column required");

  int n = 0, m_u = 0;
  bool hnn = false;
  for (const auto& h : header) {
    if (h.rfind("q", 0) == 0 && h.size() > 1 && std::isdigit(h[1])) ++n;
    if (h.rfind("u", 0) == 0 && h.size() > 1 && std::isdigit(h[1])) ++m_u;
    if (h.rfind("p", 0) == 0 && h.size() > 1 && std::isdigit(h[1])) hnn = true;
  }
  if (n == 0 || m_u == 0) throw IoError("load_dataset_csv: malformed header in " + path);

  TransitionDataset dataset;
  dataset.kind = hnn ? ModelKind::HNN : ModelKind::LNN;
  dataset.n = n;
  dataset.m_u = m_u;
  const size_t expect = 1 + 2 * static_cast<size_t>(n) + static_cast<size_t>(m_u) + 1 +
                        (hnn ? 2 * static_cast<size_t>(n) : static_cast<size_t>(n));
  if (header.size() != expect)
    throw IoError("load_dataset_csv: header has " + std::to_string(header.size()) +
                  " columns, expected " + std::to_string(expect));

  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != expect)
      throw IoError("load_dataset_csv: line " + std::to_string(line_no) +
                    " has wrong field count");
    size_t at = 0;
    auto next = [&]() -> double {
      try {
        return std::stod(f.at(at++));
      } catch (const std::exception&) {
        throw IoError("load_dataset_csv: bad number at line " + std::to_string(line_no));
      }
    };
    TransitionSample s;
    s.trajectory_id = static_cast<int>(next());
    s.q.resize(n);
    s.w.resize(n);
    s.u.resize(m_u);
    for (int i = 0; i < n; ++i) s.q[i] = next();
    for (int i = 0; i < n; ++i) s.w[i] = next();
    for (int i = 0; i < m_u; ++i) s.u[i] = next();
    s.dt = next();
    if (hnn) {
      s.label_q.resize(n);
      for (int i = 0; i < n; ++i) s.label_q[i] = next();
    }
    s.label_w.resize(n);
    for (int i = 0; i < n; ++i) s.label_w[i] = next();
    dataset.samples.push_back(std::move(s));
  }
  dataset.validate();
  return dataset;
}

}  // namespace dynlearn
