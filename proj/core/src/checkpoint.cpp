#include "strel/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "strel/error.hpp"

namespace strel {

namespace {

constexpr const char* kMagic = "strel-ckpt";
constexpr const char* kVersion = "v1";

std::string hexd(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

void write_values_line(std::ostream& os, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) os << ' ';
    os << hexd(values[i]);
  }
  os << '\n';
}

std::vector<double> read_values_line(std::istream& is, std::size_t expected) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("checkpoint: unexpected end of file in values");
  std::istringstream ls(line);
  std::vector<double> values;
  values.reserve(expected);
  std::string tok;
  while (ls >> tok) {
    char* end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str()) throw ParseError(msg("checkpoint: bad value token '", tok, "'"));
    values.push_back(v);
  }
  if (values.size() != expected) {
    throw ParseError(msg("checkpoint: expected ", expected, " values, got ", values.size()));
  }
  return values;
}

}  // namespace

void write_tensor_values(std::ostream& os, const Tensor& t) {
  os << t.ndim();
  for (std::size_t e : t.shape()) os << ' ' << e;
  os << '\n';
  write_values_line(os, t.data());
}

Tensor read_tensor_values(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("tensor: unexpected end of file in header");
  std::istringstream hs(line);
  std::size_t nd = 0;
  if (!(hs >> nd)) throw ParseError("tensor: malformed shape header");
  Shape shape(nd);
  for (std::size_t i = 0; i < nd; ++i) {
    if (!(hs >> shape[i])) throw ParseError("tensor: malformed shape header");
  }
  std::vector<double> values = read_values_line(is, shape_numel(shape));
  return Tensor::from_data(std::move(shape), std::move(values));
}

void save_checkpoint(const std::string& path, const ParamStore& store, const TrainState* state) {
  std::ofstream os(path);
  if (!os) throw IoError(msg("checkpoint: cannot open '", path, "' for writing"));
  os << kMagic << ' ' << kVersion << '\n';
  for (const auto& [name, p] : store.params()) {
    os << "param " << name << ' ';
    write_tensor_values(os, p.tensor);
  }
  for (const auto& [name, b] : store.buffers()) {
    os << "buffer " << name << ' ';
    write_tensor_values(os, b);
  }
  if (state) {
    os << "iter " << state->iter << '\n';
    for (const auto& [name, vel] : state->velocities) {
      os << "velocity " << name << ' ' << vel.size() << '\n';
      write_values_line(os, vel);
    }
    for (const auto& [name, s] : state->rng_states) {
      os << "rng " << name << ' ' << s << '\n';
    }
  }
  if (!os) throw IoError(msg("checkpoint: write failed for '", path, "'"));
}

LoadedCheckpoint load_checkpoint(const std::string& path, ParamStore& store) {
  std::ifstream is(path);
  if (!is) throw IoError(msg("checkpoint: cannot open '", path, "'"));
  std::string magic, version;
  is >> magic >> version;
  if (magic != kMagic) throw ParseError(msg("checkpoint: bad magic in '", path, "'"));
  if (version != kVersion) throw ParseError(msg("checkpoint: unsupported version ", version));
  is.ignore(std::numeric_limits<std::streamsize>::max(), '\n');

  LoadedCheckpoint result;
  std::string kind;
  std::size_t seen = 0;
  while (is >> kind) {
    if (kind == "param" || kind == "buffer") {
      std::string name;
      is >> name;
      is.ignore(1);  // space before the shape header
      Tensor t = read_tensor_values(is);
      Tensor& dst = kind == "param" ? store.at(name).tensor : store.buffer(name);
      if (dst.shape() != t.shape()) {
        throw ShapeError(msg("checkpoint: shape mismatch for '", name, "': file ",
                             shape_str(t.shape()), " vs model ", shape_str(dst.shape())));
      }
      std::copy(t.data().begin(), t.data().end(), dst.data().begin());
      if (kind == "param") ++seen;
    } else if (kind == "iter") {
      if (!result.state) result.state.emplace();
      is >> result.state->iter;
      is.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
    } else if (kind == "velocity") {
      if (!result.state) result.state.emplace();
      std::string name;
      std::size_t n = 0;
      is >> name >> n;
      is.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
      result.state->velocities[name] = read_values_line(is, n);
    } else if (kind == "rng") {
      if (!result.state) result.state.emplace();
      std::string name, rest;
      is >> name;
      std::getline(is, rest);
      if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
      result.state->rng_states[name] = rest;
    } else {
      throw ParseError(msg("checkpoint: unknown record '", kind, "' in '", path, "'"));
    }
  }
  if (seen != store.params().size()) {
    throw ParseError(msg("checkpoint: '", path, "' holds ", seen, " params, model expects ",
                         store.params().size()));
  }
  return result;
}

std::map<std::string, std::vector<double>> read_checkpoint_raw(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError(msg("checkpoint: cannot open '", path, "'"));
  std::string magic, version;
  is >> magic >> version;
  if (magic != kMagic) throw ParseError(msg("checkpoint: bad magic in '", path, "'"));
  is.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
  std::map<std::string, std::vector<double>> out;
  std::string kind;
  while (is >> kind) {
    if (kind == "param" || kind == "buffer") {
      std::string name;
      is >> name;
      is.ignore(1);
      Tensor t = read_tensor_values(is);
      out[name].assign(t.data().begin(), t.data().end());
    } else {
      std::string rest;
      std::getline(is, rest);
      if (kind == "velocity") {
        // velocity records carry a second line of values
        std::getline(is, rest);
      }
    }
  }
  return out;
}

}  // namespace strel
