#include "fmdiff/serialize.hpp"

#include <json.hpp>

#include <bit>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fmdiff {

static_assert(std::endian::native == std::endian::little, "raw payloads are written in host order");

using json = nlohmann::json;

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  return stem.string() + suffix;
}

void write_doubles(std::ostream& out, const double* p, Index n) {
  out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

Eigen::VectorXd read_doubles(std::istream& in, Index n, const std::filesystem::path& path) {
  Eigen::VectorXd v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(n * sizeof(double))) throw std::runtime_error(path.string() + ": truncated payload");
  return v;
}

struct Field {
  const char* name;
  const Eigen::VectorXd* (*get)(const TrainingTuple&);
};

const Eigen::VectorXd* novel_obs(const TrainingTuple& t) { return t.novel_obs ? &*t.novel_obs : nullptr; }
const Eigen::VectorXd* novel_phi(const TrainingTuple& t) { return t.novel_phi ? &*t.novel_phi : nullptr; }

const std::vector<Field>& all_fields() {
  static const std::vector<Field> fields{
      {"ctxt_obs", [](const TrainingTuple& t) { return &t.ctxt_obs; }},
      {"ctxt_phi", [](const TrainingTuple& t) { return &t.ctxt_phi; }},
      {"trgt_obs", [](const TrainingTuple& t) { return &t.trgt_obs; }},
      {"trgt_phi", [](const TrainingTuple& t) { return &t.trgt_phi; }},
      {"novel_obs", novel_obs},
      {"novel_phi", novel_phi},
      {"signal", [](const TrainingTuple& t) { return &t.signal; }},
  };
  return fields;
}

} // namespace

void write_dataset(const std::filesystem::path& path, const Dataset& data, std::uint64_t seed) {
  json header{{"format", "fmdiff-dataset"}, {"version", 1}, {"count", data.size()}, {"seed", seed}};
  std::vector<const Field*> fields;
  json names = json::array(), sizes = json::array();
  for (const Field& f : all_fields()) {
    const Eigen::VectorXd* first = data.empty() ? nullptr : f.get(data.front());
    if (!data.empty() && !first) continue;
    const Index size = first ? first->size() : 0;
    for (const TrainingTuple& t : data) {
      const Eigen::VectorXd* v = f.get(t);
      if (!v || v->size() != size)
        throw std::invalid_argument(std::string("write_dataset: field ") + f.name + " differs in size between tuples");
    }
    fields.push_back(&f);
    names.push_back(f.name);
    sizes.push_back(size);
  }
  header["fields"] = names;
  header["sizes"] = sizes;

  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const TrainingTuple& t : data)
    for (const Field* f : fields) {
      const Eigen::VectorXd* v = f->get(t);
      write_doubles(out, v->data(), v->size());
    }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

LoadedDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1u << 30)) throw std::runtime_error(path.string() + ": bad header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  const json header = json::parse(text);
  if (header.at("format") != "fmdiff-dataset") throw std::runtime_error(path.string() + ": not a dataset file");

  LoadedDataset out;
  out.seed = header.at("seed").get<std::uint64_t>();
  const auto names = header.at("fields").get<std::vector<std::string>>();
  const auto sizes = header.at("sizes").get<std::vector<Index>>();
  const auto count = header.at("count").get<std::size_t>();
  out.data.resize(count);
  for (TrainingTuple& t : out.data)
    for (std::size_t f = 0; f < names.size(); ++f) {
      Eigen::VectorXd v = read_doubles(in, sizes[f], path);
      const std::string& n = names[f];
      if (n == "ctxt_obs") t.ctxt_obs = std::move(v);
      else if (n == "ctxt_phi") t.ctxt_phi = std::move(v);
      else if (n == "trgt_obs") t.trgt_obs = std::move(v);
      else if (n == "trgt_phi") t.trgt_phi = std::move(v);
      else if (n == "novel_obs") t.novel_obs = std::move(v);
      else if (n == "novel_phi") t.novel_phi = std::move(v);
      else if (n == "signal") t.signal = std::move(v);
      else throw std::runtime_error(path.string() + ": unknown field " + n);
    }
  return out;
}

void write_checkpoint(const std::filesystem::path& stem, const ParameterStore& params) {
  json manifest = json::array();
  Index offset = 0;
  for (Index i = 0; i < params.size(); ++i) {
    manifest.push_back({{"name", params.names()[i]}, {"shape", params[i].shape()}, {"offset", offset}});
    offset += params[i].numel();
  }
  std::ofstream bin(with_suffix(stem, ".bin"), std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + with_suffix(stem, ".bin").string());
  const Eigen::VectorXd flat = params.flatten();
  write_doubles(bin, flat.data(), flat.size());
  std::ofstream js(with_suffix(stem, ".json"));
  js << json{{"format", "fmdiff-checkpoint"}, {"numel", offset}, {"parameters", manifest}}.dump(2) << '\n';
  if (!bin || !js) throw std::runtime_error("failed writing checkpoint " + stem.string());
}

void read_checkpoint(const std::filesystem::path& stem, ParameterStore& params) {
  std::ifstream js(with_suffix(stem, ".json"));
  if (!js) throw std::runtime_error("cannot open " + with_suffix(stem, ".json").string());
  const json manifest = json::parse(js);
  const auto& entries = manifest.at("parameters");
  if (static_cast<Index>(entries.size()) != params.size())
    throw std::runtime_error("checkpoint has " + std::to_string(entries.size()) + " parameters, model has " +
                             std::to_string(params.size()));
  for (Index i = 0; i < params.size(); ++i) {
    const auto& e = entries[static_cast<std::size_t>(i)];
    if (e.at("name") != params.names()[i]) throw std::runtime_error("checkpoint parameter " + e.at("name").get<std::string>() +
                                                                    " does not match " + params.names()[i]);
    const auto shape = e.at("shape").get<Shape>();
    if (shape != params[i].shape())
      throw ShapeError("checkpoint parameter " + params.names()[i] + " has shape " + to_string(shape) + ", model expects " +
                       to_string(params[i].shape()));
  }
  std::ifstream bin(with_suffix(stem, ".bin"), std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + with_suffix(stem, ".bin").string());
  params.assign(read_doubles(bin, manifest.at("numel").get<Index>(), with_suffix(stem, ".bin")));
}

} // namespace fmdiff
