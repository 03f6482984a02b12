#pragma once

#include "gasflow/network.hpp"
#include "gasflow/ogf.hpp"
#include "gasflow/pricing.hpp"
#include "gasflow/steady.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <ostream>
#include <span>

namespace gasflow {

/// Solution document. Pressures in Pa, flows in kg/s, prices in currency per kg/s.
/// `mc` (one entry per chance node, may be empty) adds "mc_estimate" to the chance entries.
nlohmann::json solution_to_json(const CcSolution& solution, const Network& net,
                                std::span<const ViolationEstimate> mc = {});

nlohmann::json steady_to_json(const SteadyState& state, const Network& net, std::span<const double> alpha);
nlohmann::json kkt_report_to_json(const KktReport& report);
nlohmann::json violation_to_json(std::span<const ViolationEstimate> estimates);

/// "omega,mass,value" rows.
void write_discrete_csv(std::ostream& out, const ValueDistribution& dist);
/// "grid,density" rows.
void write_density_csv(std::ostream& out, const ValueDistribution& dist);

/// Shortest decimal representation that reads back to the same double ("inf" for infinities).
std::string format_number(double value);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace gasflow
