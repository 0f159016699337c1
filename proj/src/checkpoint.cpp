// SPDX-License-Identifier: Apache-2.0

#include "idim/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "idim/config.hpp"
#include "idim/error.hpp"

namespace idim {

namespace {

constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxNameLength = 4096;

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterVector& params,
                     const CheckpointMeta& meta) {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write("IDCK", 4);
    detail::write_le<std::uint32_t>(out, kVersion);
    detail::write_le<std::uint64_t>(out, params.size());
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.num_layers()));
    for (const LayerSegment& seg : params.partition()) {
      detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(seg.name.size()));
      out.write(seg.name.data(), static_cast<std::streamsize>(seg.name.size()));
      detail::write_le<std::uint64_t>(out, seg.offset);
      detail::write_le<std::uint64_t>(out, seg.length);
    }
    for (double v : params.values()) detail::write_f32(out, static_cast<float>(v));
    if (!out) throw FormatError("failed writing " + path.string());
  }
  nlohmann::json side{{"format", "IDCK"},
                      {"version", kVersion},
                      {"D", params.size()},
                      {"model", meta.model},
                      {"step", meta.step},
                      {"seed", meta.seed},
                      {"task", meta.task}};
  std::ofstream out(sidecar_path(path), std::ios::trunc);
  if (!out) throw FormatError("cannot write " + sidecar_path(path).string());
  out << side.dump(2) << "\n";
}

ParameterVector load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  const auto file_size = std::filesystem::file_size(path);
  detail::expect_magic(in, "IDCK");
  if (detail::read_le<std::uint32_t>(in, "version") != kVersion) {
    throw FormatError("unsupported checkpoint version in " + path.string());
  }
  const auto D = detail::read_le<std::uint64_t>(in, "D");
  const auto m = detail::read_le<std::uint32_t>(in, "m");
  if (D > file_size / 4 || m > file_size) throw FormatError("truncated checkpoint " + path.string());
  std::vector<LayerSegment> partition(m);
  for (LayerSegment& seg : partition) {
    const auto len = detail::read_le<std::uint32_t>(in, "layer name length");
    if (len > kMaxNameLength) throw FormatError("corrupt layer name length");
    seg.name.resize(len);
    if (!in.read(seg.name.data(), len)) throw FormatError("truncated file while reading layer name");
    seg.offset = detail::read_le<std::uint64_t>(in, "layer offset");
    seg.length = detail::read_le<std::uint64_t>(in, "layer length");
  }
  std::vector<double> values(D);
  for (double& v : values) v = detail::read_f32(in, "values");
  try {
    return ParameterVector(std::move(values), std::move(partition));
  } catch (const InvalidDimensionError& e) {
    throw FormatError(std::string("invalid partition table: ") + e.what());
  }
}

CheckpointMeta load_checkpoint_meta(const std::filesystem::path& path) {
  std::ifstream in(sidecar_path(path));
  if (!in) throw FormatError("cannot open " + sidecar_path(path).string());
  try {
    const auto side = nlohmann::json::parse(in);
    CheckpointMeta meta;
    meta.model = side.at("model").get<ModelSpec>();
    meta.step = side.at("step").get<std::size_t>();
    meta.seed = side.at("seed").get<std::uint64_t>();
    meta.task = side.at("task").get<std::string>();
    return meta;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad checkpoint sidecar: " + std::string(e.what()));
  } catch (const ConfigError& e) {
    throw FormatError("bad checkpoint sidecar: " + std::string(e.what()));
  }
}

}  // namespace idim
