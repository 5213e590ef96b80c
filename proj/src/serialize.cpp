#include "varnn/serialize.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace varnn {

namespace {

constexpr char kMagic[8] = {'V', 'R', 'N', 'N', 'P', 'A', 'R', '1'};

struct TensorView {
  std::string name;
  std::vector<std::size_t> dims;
  const double* data;
  std::size_t size;
};

std::vector<TensorView> tensor_views(const VarnnSpec& spec, const VarnnParams& p) {
  std::vector<TensorView> ts{
      {"Wz", {p.Wz.rows, p.Wz.cols}, p.Wz.data.data(), p.Wz.size()},
      {"bz", {p.bz.len()}, p.bz.data.data(), p.bz.len()},
      {"Wo", {p.Wo.rows, p.Wo.cols}, p.Wo.data.data(), p.Wo.size()},
      {"bo", {1}, &p.bo, 1},
      {"We", {p.We.rows, p.We.cols}, p.We.data.data(), p.We.size()},
      {"be", {p.be.len()}, p.be.data.data(), p.be.len()},
  };
  if (has_accumulative_memory(spec.variant)) {
    ts.push_back({"Wh", {p.Wh.rows, p.Wh.cols}, p.Wh.data.data(), p.Wh.size()});
  }
  return ts;
}

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("params file truncated");
  return value;
}

void assign_tensor(VarnnParams& p, const std::string& name,
                   const std::vector<std::size_t>& dims, std::vector<double> values) {
  auto expect_mat = [&](Mat& dst) {
    if (dims.size() != 2) throw std::runtime_error("tensor " + name + ": expected 2 dims");
    dst.rows = dims[0];
    dst.cols = dims[1];
    dst.data = std::move(values);
    if (dst.data.size() != dst.rows * dst.cols) {
      throw std::runtime_error("tensor " + name + ": dim/value count mismatch");
    }
  };
  auto expect_vec = [&](Vec& dst) {
    if (dims.size() != 1) throw std::runtime_error("tensor " + name + ": expected 1 dim");
    dst.data = std::move(values);
    if (dst.data.size() != dims[0]) {
      throw std::runtime_error("tensor " + name + ": dim/value count mismatch");
    }
  };
  if (name == "Wz") expect_mat(p.Wz);
  else if (name == "bz") expect_vec(p.bz);
  else if (name == "Wo") expect_mat(p.Wo);
  else if (name == "bo") p.bo = values.at(0);
  else if (name == "We") expect_mat(p.We);
  else if (name == "be") expect_vec(p.be);
  else if (name == "Wh") expect_mat(p.Wh);
  else throw std::runtime_error("unknown tensor name in params file: " + name);
}

nlohmann::json spec_to_json(const VarnnSpec& spec) {
  return {{"variant", std::string(to_string(spec.variant))},
          {"d", spec.d},
          {"m", spec.m},
          {"k", spec.k},
          {"sigma", std::string(to_string(spec.sigma))},
          {"rho", std::string(to_string(spec.rho))},
          {"scalar_residual", spec.scalar_residual},
          {"zero_memory", spec.zero_memory}};
}

VarnnSpec spec_from_json(const nlohmann::json& j) {
  VarnnSpec spec;
  spec.variant = variant_from_string(j.at("variant").get<std::string>());
  spec.d = j.at("d").get<std::size_t>();
  spec.m = j.at("m").get<std::size_t>();
  spec.k = j.at("k").get<std::size_t>();
  spec.sigma = activation_from_string(j.at("sigma").get<std::string>());
  spec.rho = activation_from_string(j.at("rho").get<std::string>());
  spec.scalar_residual = j.at("scalar_residual").get<bool>();
  spec.zero_memory = j.at("zero_memory").get<bool>();
  spec.validate();
  return spec;
}

}  // namespace

void save_params_binary(const VarnnSpec& spec, const VarnnParams& params,
                        const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(spec.variant));
  write_pod<std::uint64_t>(out, spec.d);
  write_pod<std::uint64_t>(out, spec.m);
  write_pod<std::uint64_t>(out, spec.k);
  write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(spec.sigma));
  write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(spec.rho));
  const std::uint8_t flags = (spec.scalar_residual ? 1u : 0u) | (spec.zero_memory ? 2u : 0u);
  write_pod<std::uint8_t>(out, flags);

  const auto tensors = tensor_views(spec, params);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    write_pod<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(t.dims.size()));
    for (std::size_t dim : t.dims) write_pod<std::uint64_t>(out, dim);
    out.write(reinterpret_cast<const char*>(t.data),
              static_cast<std::streamsize>(t.size * sizeof(double)));
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::pair<VarnnSpec, VarnnParams> load_params_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open params file: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a params file: " + path);
  }
  VarnnSpec spec;
  spec.variant = static_cast<Variant>(read_pod<std::uint8_t>(in));
  spec.d = static_cast<std::size_t>(read_pod<std::uint64_t>(in));
  spec.m = static_cast<std::size_t>(read_pod<std::uint64_t>(in));
  spec.k = static_cast<std::size_t>(read_pod<std::uint64_t>(in));
  spec.sigma = static_cast<Activation>(read_pod<std::uint8_t>(in));
  spec.rho = static_cast<Activation>(read_pod<std::uint8_t>(in));
  const std::uint8_t flags = read_pod<std::uint8_t>(in);
  spec.scalar_residual = (flags & 1u) != 0;
  spec.zero_memory = (flags & 2u) != 0;
  spec.validate();

  VarnnParams params;
  const auto count = read_pod<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint16_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto ndim = read_pod<std::uint8_t>(in);
    std::vector<std::size_t> dims;
    std::size_t total = 1;
    for (std::uint8_t dd = 0; dd < ndim; ++dd) {
      dims.push_back(static_cast<std::size_t>(read_pod<std::uint64_t>(in)));
      total *= dims.back();
    }
    std::vector<double> values(total);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(total * sizeof(double)));
    if (!in) throw std::runtime_error("params file truncated: " + path);
    assign_tensor(params, name, dims, std::move(values));
  }
  return {spec, params};
}

nlohmann::json params_to_json(const VarnnSpec& spec, const VarnnParams& params) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : tensor_views(spec, params)) {
    tensors.push_back({{"name", t.name},
                       {"shape", t.dims},
                       {"values", std::vector<double>(t.data, t.data + t.size)}});
  }
  return {{"format", "varnn-params"},
          {"version", 1},
          {"spec", spec_to_json(spec)},
          {"tensors", tensors}};
}

std::pair<VarnnSpec, VarnnParams> params_from_json(const nlohmann::json& j) {
  if (j.at("format").get<std::string>() != "varnn-params") {
    throw std::runtime_error("not a varnn-params JSON document");
  }
  VarnnSpec spec = spec_from_json(j.at("spec"));
  VarnnParams params;
  for (const auto& t : j.at("tensors")) {
    assign_tensor(params, t.at("name").get<std::string>(),
                  t.at("shape").get<std::vector<std::size_t>>(),
                  t.at("values").get<std::vector<double>>());
  }
  return {spec, params};
}

void save_params_json(const VarnnSpec& spec, const VarnnParams& params,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << params_to_json(spec, params).dump(2) << "\n";
}

std::pair<VarnnSpec, VarnnParams> load_params_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open params file: " + path);
  nlohmann::json j;
  in >> j;
  return params_from_json(j);
}

}  // namespace varnn
