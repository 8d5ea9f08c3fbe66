#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "scatter/bounds.hpp"
#include "scatter/coherence.hpp"
#include "scatter/iht.hpp"
#include "scatter/models.hpp"

namespace scatter {

using Json = nlohmann::ordered_json;

/// Columns: iter, y_err, l1_error, support_size, support_indices (JSON array,
/// quoted), values (quoted "re;im" pairs aligned with the indices).
inline void write_trace_csv(std::ostream& os, const ReconstructionTrace& trace) {
  os << "iter,y_err,l1_error,support_size,support_indices,values\n";
  for (const auto& rec : trace.iterations) {
    os << rec.iter << "," << format_double(rec.y_err) << ",";
    if (rec.l1_error) os << format_double(*rec.l1_error);
    os << "," << rec.support.size() << ",\"[";
    for (std::size_t a = 0; a < rec.support.size(); ++a) {
      if (a) os << ",";
      os << rec.support[a];
    }
    os << "]\",\"";
    for (std::size_t a = 0; a < rec.values.size(); ++a) {
      if (a) os << " ";
      os << format_double(rec.values[a].real()) << ";" << format_double(rec.values[a].imag());
    }
    os << "\"\n";
  }
}

inline void write_trace_csv_file(const std::string& path, const ReconstructionTrace& trace) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_trace_csv(os, trace);
}

/// Columns: iter, bound_l1, rho_n, floor.
inline void write_bound_trace_csv(std::ostream& os, const BoundTrace& trace) {
  os << "iter,bound_l1,rho_n,floor\n";
  for (std::size_t i = 0; i < trace.bound_l1.size(); ++i) {
    os << (i + 1) << "," << format_double(trace.bound_l1[i]) << "," << format_double(trace.rho_n[i])
       << "," << format_double(trace.floor_value) << "\n";
  }
}

inline Json coherence_report_json(const CoherenceReport& report) {
  Json j;
  j["mu_exact"] = report.mu_exact;
  j["argmax_pair"] = {report.argmax_pair.first, report.argmax_pair.second};
  Json chain = Json::array();
  for (const auto& b : report.bound_chain)
    chain.push_back(Json{{"name", b.name}, {"value", b.value}, {"clamped", b.clamped}});
  j["bound_chain"] = chain;
  return j;
}

inline Json potential_field_json(const PotentialField& pot) {
  Json j;
  j["grid"] = {{"n_per_side", pot.grid_n_per_side}, {"side_length", pot.grid_side_length}};
  j["support"] = pot.support;
  Json vals = Json::array();
  for (const auto& v : pot.values) vals.push_back(Json::array({v.real(), v.imag()}));
  j["values"] = vals;
  return j;
}

inline PotentialField potential_field_from_json(const Json& j) {
  PotentialField pot;
  pot.grid_n_per_side = j.at("grid").at("n_per_side").get<int>();
  pot.grid_side_length = j.at("grid").at("side_length").get<double>();
  pot.support = j.at("support").get<std::vector<int>>();
  for (const auto& v : j.at("values")) pot.values.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
  return pot;
}

inline void write_json_file(const std::string& path, const Json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << j.dump(2) << "\n";
}

inline Json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  Json j;
  is >> j;
  return j;
}

}  // namespace scatter
