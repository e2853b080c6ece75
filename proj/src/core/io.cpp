// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0

#include "io.hpp"

#include "config.hpp"
#include "errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little, "on-disk arrays are little-endian");

namespace mcur {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

template <typename T>
void write_array(const fs::path& path, const std::vector<T>& data) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(T)));
  if (!f) throw IoError("write failed for " + path.string());
}

template <typename T>
std::vector<T> read_array(const fs::path& path, std::size_t count) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  f.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(f.tellg());
  if (bytes != count * sizeof(T)) {
    throw IncompatibleError(path.string() + ": expected " + std::to_string(count * sizeof(T)) + " bytes, found " +
                            std::to_string(bytes));
  }
  f.seekg(0);
  std::vector<T> out(count);
  f.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes));
  if (!f) throw IoError("read failed for " + path.string());
  return out;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << j.dump(2) << "\n";
  if (!f) throw IoError("write failed for " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": malformed manifest: " + e.what());
  }
}

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw IoError(where + ": missing '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw IoError(where + ": field '" + std::string(key) + "' has the wrong type");
  }
}

json save_split(const std::vector<Sample>& samples, const std::string& split, const fs::path& dir, int m) {
  const std::size_t n = samples.size();
  json files = json::object();
  for (int p = 0; p < m; ++p) {
    const int t = samples.empty() ? 0 : samples.front().modalities[static_cast<std::size_t>(p)].seq_len();
    const int d = samples.empty() ? 0 : samples.front().modalities[static_cast<std::size_t>(p)].feature_dim();
    std::vector<double> buf;
    buf.reserve(n * static_cast<std::size_t>(t * d));
    for (const auto& s : samples) {
      const Matrix& x = s.modalities[static_cast<std::size_t>(p)].data;
      if (x.rows() != t || x.cols() != d) throw InvalidArgument("save_dataset: ragged modality shapes");
      buf.insert(buf.end(), x.data(), x.data() + x.size());
    }
    const std::string name = split + "_x" + std::to_string(p) + ".f64";
    write_array(dir / name, buf);
    files["x" + std::to_string(p)] = {{"file", name}, {"dtype", "float64"}, {"shape", {n, t, d}}};
  }
  std::vector<double> y;
  std::vector<std::uint8_t> mask;
  std::vector<std::int64_t> ids;
  for (const auto& s : samples) {
    y.push_back(s.label.kind == TaskKind::classification ? static_cast<double>(s.label.class_index) : s.label.value);
    mask.insert(mask.end(), s.mask.bits().begin(), s.mask.bits().end());
    ids.push_back(s.sample_id);
  }
  write_array(dir / (split + "_y.f64"), y);
  write_array(dir / (split + "_mask.u8"), mask);
  write_array(dir / (split + "_id.i64"), ids);
  files["y"] = {{"file", split + "_y.f64"}, {"dtype", "float64"}, {"shape", {n}}};
  files["mask"] = {{"file", split + "_mask.u8"}, {"dtype", "uint8"}, {"shape", {n, m}}};
  files["id"] = {{"file", split + "_id.i64"}, {"dtype", "int64"}, {"shape", {n}}};
  return {{"n", n}, {"arrays", files}};
}

std::vector<Sample> load_split(const json& split, const fs::path& dir, const SynthConfig& config,
                               const std::string& where) {
  const auto n = field<std::size_t>(split, "n", where);
  const json& arrays = split.at("arrays");
  const int m = config.modalities;
  std::vector<Sample> out(n);
  for (int p = 0; p < m; ++p) {
    const json& a = arrays.at("x" + std::to_string(p));
    const auto shape = field<std::vector<std::size_t>>(a, "shape", where);
    if (shape.size() != 3 || shape[0] != n) throw IncompatibleError(where + ": bad shape for modality " + std::to_string(p));
    const auto t = static_cast<Eigen::Index>(shape[1]);
    const auto d = static_cast<Eigen::Index>(shape[2]);
    const auto buf = read_array<double>(dir / field<std::string>(a, "file", where), n * shape[1] * shape[2]);
    for (std::size_t i = 0; i < n; ++i) {
      ModalityTensor mt;
      mt.modality = p;
      mt.data = Eigen::Map<const Matrix>(buf.data() + i * shape[1] * shape[2], t, d);
      out[i].modalities.push_back(std::move(mt));
    }
  }
  const auto y = read_array<double>(dir / field<std::string>(arrays.at("y"), "file", where), n);
  const auto mask = read_array<std::uint8_t>(dir / field<std::string>(arrays.at("mask"), "file", where),
                                             n * static_cast<std::size_t>(m));
  const auto ids = read_array<std::int64_t>(dir / field<std::string>(arrays.at("id"), "file", where), n);
  for (std::size_t i = 0; i < n; ++i) {
    Sample& s = out[i];
    s.mask = AvailabilityMask(std::vector<std::uint8_t>(mask.begin() + static_cast<std::ptrdiff_t>(i * m),
                                                        mask.begin() + static_cast<std::ptrdiff_t>((i + 1) * m)));
    if (config.task == TaskKind::classification) {
      s.label = Label::classification(static_cast<int>(y[i]), config.num_classes);
    } else {
      s.label = Label::regression(y[i]);
    }
    s.sample_id = ids[i];
  }
  return out;
}

}  // namespace

void save_dataset(const Dataset& dataset, const fs::path& dir, const json& provenance) {
  ensure_dir(dir);
  const int m = dataset.config.modalities;
  json manifest = {{"format", "mcur-dataset"},
                   {"format_version", 1},
                   {"byte_order", "little"},
                   {"config", to_json(dataset.config)},
                   {"seed", dataset.config.seed},
                   {"provenance", provenance.is_null() ? json::object() : provenance},
                   {"splits",
                    {{"train", save_split(dataset.train, "train", dir, m)},
                     {"test", save_split(dataset.test, "test", dir, m)}}}};
  write_json(dir / "manifest.json", manifest);
}

Dataset load_dataset(const fs::path& dir) {
  const json manifest = read_json(dir / "manifest.json");
  const std::string where = (dir / "manifest.json").string();
  if (manifest.value("format", "") != "mcur-dataset") throw IoError(where + ": not a dataset manifest");
  Dataset ds;
  try {
    ds.config = synth_config_from_json(manifest.at("config"), "config");
  } catch (const json::exception& e) {
    throw IoError(where + ": " + e.what());
  }
  try {
    ds.train = load_split(manifest.at("splits").at("train"), dir, ds.config, where);
    ds.test = load_split(manifest.at("splits").at("test"), dir, ds.config, where);
  } catch (const json::exception& e) {
    throw IoError(where + ": " + e.what());
  }
  return ds;
}

// ---- checkpoints -------------------------------------------------------------------

json to_json(const ModelShape& shape) {
  return {{"modalities", shape.modalities},
          {"feature_dims", shape.feature_dims},
          {"task", to_string(shape.task)},
          {"output_size", shape.output_size}};
}

ModelShape model_shape_from_json(const json& j) {
  ModelShape s;
  s.modalities = field<int>(j, "modalities", "shape");
  s.feature_dims = field<std::vector<int>>(j, "feature_dims", "shape");
  s.task = task_kind_from_string(field<std::string>(j, "task", "shape"));
  s.output_size = field<int>(j, "output_size", "shape");
  return s;
}

std::string parameter_hash(const Backbone& model) {
  std::string bytes;
  for (const auto& p : model.parameters()) {
    bytes += p.name;
    bytes += '\0';
    bytes += std::to_string(p.value.rows()) + "x" + std::to_string(p.value.cols());
    bytes.append(reinterpret_cast<const char*>(p.value.data()), static_cast<std::size_t>(p.value.size()) * sizeof(double));
  }
  return fnv1a_hex(bytes);
}

void save_checkpoint(const Checkpoint& checkpoint, const fs::path& dir, const json& provenance) {
  ensure_dir(dir);
  const Backbone& model = checkpoint.model;
  json params = json::array();
  std::vector<double> flat;
  for (const auto& p : model.parameters()) {
    params.push_back({{"name", p.name}, {"shape", {p.value.rows(), p.value.cols()}}, {"offset", flat.size()}});
    flat.insert(flat.end(), p.value.data(), p.value.data() + p.value.size());
  }
  write_array(dir / "params.bin", flat);
  json manifest = {{"format", "mcur-checkpoint"},
                   {"format_version", 1},
                   {"dtype", "float64"},
                   {"byte_order", "little"},
                   {"role", to_string(checkpoint.role())},
                   {"epoch", checkpoint.epoch},
                   {"rng_state", checkpoint.rng_state},
                   {"backbone", to_json(model.config())},
                   {"shape", to_json(model.shape())},
                   {"config_echo", checkpoint.config_echo},
                   {"parameters", params},
                   {"parameter_hash", parameter_hash(model)},
                   {"provenance", provenance.is_null() ? json::object() : provenance}};
  write_json(dir / "manifest.json", manifest);
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const std::string where = (dir / "manifest.json").string();
  const json manifest = read_json(dir / "manifest.json");
  if (manifest.value("format", "") != "mcur-checkpoint") throw IoError(where + ": not a checkpoint manifest");
  try {
    const BackboneConfig config = backbone_config_from_json(manifest.at("backbone"), "backbone");
    const ModelShape shape = model_shape_from_json(manifest.at("shape"));
    const Role role = role_from_string(field<std::string>(manifest, "role", where));
    Backbone model(config, shape, role, 0);
    const json& params = manifest.at("parameters");
    if (params.size() != model.parameters().size()) {
      throw IncompatibleError(where + ": parameter count " + std::to_string(params.size()) + " does not match the model (" +
                              std::to_string(model.parameters().size()) + ")");
    }
    std::size_t total = 0;
    for (const auto& p : model.parameters()) total += static_cast<std::size_t>(p.value.size());
    const auto flat = read_array<double>(dir / "params.bin", total);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = model.parameters()[i];
      const auto name = field<std::string>(params[i], "name", where);
      const auto pshape = field<std::vector<Eigen::Index>>(params[i], "shape", where);
      const auto offset = field<std::size_t>(params[i], "offset", where);
      if (name != p.name || pshape.size() != 2 || pshape[0] != p.value.rows() || pshape[1] != p.value.cols()) {
        throw IncompatibleError(where + ": parameter '" + name + "' does not match the rebuilt model");
      }
      if (offset + static_cast<std::size_t>(p.value.size()) > flat.size()) throw IoError(where + ": offset out of range");
      std::memcpy(p.value.data(), flat.data() + offset, static_cast<std::size_t>(p.value.size()) * sizeof(double));
    }
    if (parameter_hash(model) != field<std::string>(manifest, "parameter_hash", where)) {
      throw IoError(where + ": parameter hash mismatch (params.bin corrupted?)");
    }
    return Checkpoint{std::move(model), manifest.value("config_echo", json::object()),
                      manifest.value("rng_state", std::string{}), manifest.value("epoch", 0)};
  } catch (const json::exception& e) {
    throw IoError(where + ": " + e.what());
  }
}

}  // namespace mcur
