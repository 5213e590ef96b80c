#pragma once

#include <string>
#include <utility>

#include <json.hpp>

#include "varnn/model.hpp"

namespace varnn {

// Binary layout (little-endian), bit-exact round trip:
//   magic "VRNNPAR1"
//   u8 variant, u64 d, u64 m, u64 k, u8 sigma, u8 rho, u8 flags
//     (flags bit0 = scalar_residual, bit1 = zero_memory)
//   u32 tensor count, then per tensor:
//     u16 name length, name bytes, u8 ndim, u64 dims[ndim],
//     f64 values in row-major order
void save_params_binary(const VarnnSpec& spec, const VarnnParams& params,
                        const std::string& path);
std::pair<VarnnSpec, VarnnParams> load_params_binary(const std::string& path);

// JSON mirror of the same layout. nlohmann serializes doubles with a
// shortest-round-trip representation, so values survive exactly.
nlohmann::json params_to_json(const VarnnSpec& spec, const VarnnParams& params);
std::pair<VarnnSpec, VarnnParams> params_from_json(const nlohmann::json& j);

void save_params_json(const VarnnSpec& spec, const VarnnParams& params,
                      const std::string& path);
std::pair<VarnnSpec, VarnnParams> load_params_json(const std::string& path);

}  // namespace varnn
