// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <vector>

#include <json.hpp>

#include "divest/estimator.hpp"
#include "divest/experiments.hpp"
#include "divest/netclass.hpp"
#include "divest/oracle.hpp"

namespace divest {

using nlohmann::json;

// Non-finite doubles are written as null and read back as +infinity.
json number_or_null(double v);

json to_json(const NetClassSpec& spec);
NetClassSpec class_spec_from_json(const json& j);

// {"format":"divest.netparams","version":1,"k","d","activation",
//  "beta","w","b","w0","b0"}; w is a list of k rows.
json params_to_json(const NetParams& params, Activation activation);
NetParams params_from_json(const json& j);

json to_json(const TrainOptions& opts);
// Overlays the keys present in `j` on `base`; unknown keys throw ParseError.
TrainOptions train_options_from_json(const json& j, TrainOptions base = {});

json result_to_json(const EstimateResult& result, bool include_trace);
json oracle_to_json(DivergenceKind kind, const OracleResult& result);

json to_json(const SweepRecord& record);
SweepRecord record_from_json(const json& j);
json records_to_json(const std::vector<SweepRecord>& records);
std::vector<SweepRecord> records_from_json(const json& j);

json to_json(const RateFit& fit);
json to_json(const ApproxReport& report);

json to_json(const SweepConfig& cfg);
SweepConfig sweep_config_from_json(const json& j);

}  // namespace divest
