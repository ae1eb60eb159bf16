#pragma once

#include <iomanip>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "dualformer/analysis/cost.hpp"
#include "dualformer/model/config_io.hpp"

namespace dualformer {

inline nlohmann::json to_json(const CostReport& r) {
  using nlohmann::json;
  json terms = json::array();
  for (const auto& t : r.terms) {
    terms.push_back({{"label", t.label},
                     {"kind", std::string(to_string(t.kind))},
                     {"macs", t.macs},
                     {"params", t.params},
                     {"elementwise", t.elementwise}});
  }
  json shares = json::object();
  for (const auto& [kind, share] : r.shares) shares[std::string(to_string(kind))] = share;
  json analytic = json::array();
  for (const auto& a : r.analytic) {
    analytic.push_back({{"stage", a.stage},
                        {"map", extent_json(a.map)},
                        {"window", extent_json(a.window)},
                        {"M", a.tokens},
                        {"D", a.width},
                        {"S", a.priors},
                        {"N_g", a.scales},
                        {"blocks", a.blocks},
                        {"lw", a.lw},
                        {"gp_unfactorized", a.gp.unfactorized},
                        {"gp_factorized", a.gp.factorized},
                        {"gp_conv_exact", a.gp.conv_exact},
                        {"full", a.full}});
  }
  json comparisons = json::array();
  for (const auto& c : r.comparisons) {
    comparisons.push_back({{"stage", c.stage},
                           {"full", c.full},
                           {"dual", c.dual},
                           {"full_over_dual", c.full_over_dual},
                           {"full_over_gp", c.full_over_gp},
                           {"tokens_over_priors", c.tokens_over_priors},
                           {"flagged", c.flagged}});
  }
  return {{"unit", r.unit},
          {"terms", terms},
          {"totals", {{"macs", r.totals.macs}, {"params", r.totals.params}, {"elementwise", r.totals.elementwise}}},
          {"shares", shares},
          {"analytic", analytic},
          {"comparisons", comparisons}};
}

inline std::string to_csv(const CostReport& r) {
  std::ostringstream os;
  os << "label,kind,macs,params,elementwise\n";
  for (const auto& t : r.terms) {
    os << t.label << ',' << to_string(t.kind) << ',' << t.macs << ',' << t.params << ',' << t.elementwise << '\n';
  }
  return os.str();
}

inline std::string to_table(const CostReport& r) {
  std::ostringstream os;
  const auto giga = [](Count n) { return static_cast<double>(n) / 1e9; };
  const auto mega = [](Count n) { return static_cast<double>(n) / 1e6; };
  os << std::left << std::setw(28) << "layer" << std::setw(12) << "kind" << std::right << std::setw(14)
     << "G" + r.unit << std::setw(12) << "M params" << '\n';
  os << std::fixed;
  for (const auto& t : r.terms) {
    os << std::left << std::setw(28) << t.label << std::setw(12) << to_string(t.kind) << std::right
       << std::setprecision(4) << std::setw(14) << giga(t.macs) << std::setw(12) << mega(t.params) << '\n';
  }
  os << std::left << std::setw(40) << "total" << std::right << std::setw(14) << giga(r.totals.macs) << std::setw(12)
     << mega(r.totals.params) << '\n';
  os << "elementwise ops (not in MAC total): " << r.totals.elementwise << '\n';
  os << "shares:";
  for (const auto& [kind, share] : r.shares) os << ' ' << to_string(kind) << '=' << std::setprecision(3) << share;
  os << '\n';
  if (!r.analytic.empty()) {
    os << "\nclosed-form attention cost per block (" << r.unit << ")\n";
    os << std::setw(6) << "stage" << std::setw(8) << "M" << std::setw(6) << "S" << std::setw(16) << "lw"
       << std::setw(16) << "gp(S+Ng)MD" << std::setw(16) << "gp factorized" << std::setw(16) << "gp conv exact"
       << std::setw(18) << "full M^2D" << '\n';
    for (const auto& a : r.analytic) {
      os << std::setw(6) << a.stage << std::setw(8) << a.tokens << std::setw(6) << a.priors << std::setw(16) << a.lw
         << std::setw(16) << a.gp.unfactorized << std::setw(16) << a.gp.factorized << std::setw(16)
         << a.gp.conv_exact << std::setw(18) << a.full << '\n';
    }
  }
  if (!r.comparisons.empty()) {
    os << "\nfull attention vs dual-level attention\n";
    os << std::setw(6) << "stage" << std::setw(12) << "full/dual" << std::setw(12) << "full/gp" << std::setw(10)
       << "M/S" << "  note\n";
    for (const auto& c : r.comparisons) {
      os << std::setw(6) << c.stage << std::setprecision(2) << std::setw(12) << c.full_over_dual << std::setw(12)
         << c.full_over_gp << std::setw(10) << c.tokens_over_priors << (c.flagged ? "  not cheaper than full" : "")
         << '\n';
    }
  }
  return os.str();
}

}  // namespace dualformer
