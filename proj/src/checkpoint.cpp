#include "dirinet/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "dirinet/error.hpp"
#include "dirinet/text.hpp"

namespace dirinet {

namespace {

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
}

std::string config_line(const ModelConfig& c) {
  std::ostringstream os;
  os << "config window_len=" << c.window_len << " hidden=" << c.hidden << " latent=" << c.latent
     << " time_dim=" << c.time_dim << " mask_dim=" << c.mask_dim
     << " alpha=" << format_double(c.alpha) << " k_max=" << c.k_max
     << " latent_iters_train=" << c.latent_iters_train
     << " latent_iters_infer=" << c.latent_iters_infer;
  return os.str();
}

std::map<std::string, std::string> parse_fields(const std::vector<std::string>& tokens,
                                                const std::string& what) {
  std::map<std::string, std::string> out;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const auto eq = tokens[i].find('=');
    if (eq == std::string::npos) throw CheckpointError("malformed " + what + " field '" + tokens[i] + "'");
    out[tokens[i].substr(0, eq)] = tokens[i].substr(eq + 1);
  }
  return out;
}

int int_field(const std::map<std::string, std::string>& f, const std::string& key) {
  auto it = f.find(key);
  if (it == f.end()) throw CheckpointError("checkpoint config is missing '" + key + "'");
  auto v = parse_integer(it->second);
  if (!v) throw CheckpointError("checkpoint config field '" + key + "' is not an integer");
  return static_cast<int>(*v);
}

double double_field(const std::map<std::string, std::string>& f, const std::string& key,
                    const std::string& what) {
  auto it = f.find(key);
  if (it == f.end()) throw CheckpointError("checkpoint " + what + " is missing '" + key + "'");
  auto v = parse_double(it->second);
  if (!v) throw CheckpointError("checkpoint " + what + " field '" + key + "' is not a number");
  return *v;
}

// Row-major little-endian float32.
std::string encode_array(const Matrix& m) {
  std::string out;
  out.reserve(static_cast<std::size_t>(m.size()) * 4);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const auto bits = to_little_endian(std::bit_cast<std::uint32_t>(static_cast<float>(m(r, c))));
      char buf[4];
      std::memcpy(buf, &bits, 4);
      out.append(buf, 4);
    }
  }
  return out;
}

std::vector<std::string> tokens_of(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

}  // namespace

std::string serialize_checkpoint(const ModelParams& params) {
  const auto shapes = ModelParams::layout(params.config);
  const auto arrays = params.arrays();
  std::ostringstream os;
  os << kCheckpointVersion << '\n';
  os << config_line(params.config) << '\n';
  os << "norm mean=" << format_double(params.norm.mean) << " std=" << format_double(params.norm.std)
     << '\n';
  std::vector<std::string> blobs;
  for (std::size_t i = 0; i < ModelParams::kArrayCount; ++i) {
    if (arrays[i]->rows() != shapes[i].rows || arrays[i]->cols() != shapes[i].cols) {
      throw CheckpointError("array " + std::string(shapes[i].name) + " has an inconsistent shape");
    }
    blobs.push_back(encode_array(*arrays[i]));
    os << "array " << shapes[i].name << ' ' << shapes[i].rows << ' ' << shapes[i].cols << " f32 "
       << digest_hex(blobs.back()) << '\n';
  }
  os << "end\n";
  std::string out = os.str();
  for (const std::string& blob : blobs) out += blob;
  return out;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  write_file_atomic(path.string(), serialize_checkpoint(params));
}

ModelParams deserialize_checkpoint(const std::string& bytes,
                                   const std::optional<ModelConfig>& expected) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw CheckpointError("checkpoint header is truncated");
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };

  const std::string version = next_line();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unknown checkpoint format version '" + version.substr(0, 32) + "'");
  }

  ModelParams p;
  {
    const auto toks = tokens_of(next_line());
    if (toks.empty() || toks[0] != "config") throw CheckpointError("checkpoint config line missing");
    const auto f = parse_fields(toks, "config");
    ModelConfig& c = p.config;
    c.window_len = int_field(f, "window_len");
    c.hidden = int_field(f, "hidden");
    c.latent = int_field(f, "latent");
    c.time_dim = int_field(f, "time_dim");
    c.mask_dim = int_field(f, "mask_dim");
    c.alpha = double_field(f, "alpha", "config");
    c.k_max = int_field(f, "k_max");
    c.latent_iters_train = int_field(f, "latent_iters_train");
    c.latent_iters_infer = int_field(f, "latent_iters_infer");
    try {
      c.validate();
    } catch (const InputError& e) {
      throw CheckpointError(std::string("checkpoint config is invalid: ") + e.what());
    }
  }
  {
    const auto toks = tokens_of(next_line());
    if (toks.empty() || toks[0] != "norm") throw CheckpointError("checkpoint norm line missing");
    const auto f = parse_fields(toks, "norm");
    p.norm.mean = double_field(f, "mean", "norm");
    p.norm.std = double_field(f, "std", "norm");
  }

  const auto shapes = ModelParams::layout(p.config);
  const auto expected_shapes = expected ? ModelParams::layout(*expected) : shapes;
  auto arrays = p.arrays();
  std::vector<std::string> digests;
  for (std::size_t i = 0; i < ModelParams::kArrayCount; ++i) {
    const auto toks = tokens_of(next_line());
    const std::string name(shapes[i].name);
    if (toks.size() != 6 || toks[0] != "array") {
      throw CheckpointError("malformed manifest entry where array " + name + " was expected");
    }
    if (toks[1] != name) {
      throw CheckpointError("manifest lists array '" + toks[1] + "' where " + name + " was expected");
    }
    const auto rows = parse_integer(toks[2]);
    const auto cols = parse_integer(toks[3]);
    if (!rows || !cols || *rows != shapes[i].rows || *cols != shapes[i].cols) {
      throw CheckpointError("array " + name + " has shape " + toks[2] + "x" + toks[3] +
                            " but the embedded config implies " + std::to_string(shapes[i].rows) +
                            "x" + std::to_string(shapes[i].cols));
    }
    if (*rows != expected_shapes[i].rows || *cols != expected_shapes[i].cols) {
      throw CheckpointError("array " + name + " has shape " + toks[2] + "x" + toks[3] +
                            " but the configured model expects " +
                            std::to_string(expected_shapes[i].rows) + "x" +
                            std::to_string(expected_shapes[i].cols));
    }
    if (toks[4] != "f32") throw CheckpointError("array " + name + " has unsupported type " + toks[4]);
    digests.push_back(toks[5]);
  }
  if (next_line() != "end") throw CheckpointError("checkpoint manifest is not terminated");

  for (std::size_t i = 0; i < ModelParams::kArrayCount; ++i) {
    Matrix& m = *arrays[i];
    m.resize(shapes[i].rows, shapes[i].cols);
    const std::size_t need = static_cast<std::size_t>(m.size()) * 4;
    if (pos + need > bytes.size()) {
      throw CheckpointError("checkpoint data is truncated in array " + std::string(shapes[i].name));
    }
    if (digest_hex(std::string_view(bytes).substr(pos, need)) != digests[i]) {
      throw CheckpointError("checksum mismatch in array " + std::string(shapes[i].name));
    }
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        std::uint32_t bits = 0;
        std::memcpy(&bits, bytes.data() + pos, 4);
        pos += 4;
        const float v = std::bit_cast<float>(to_little_endian(bits));
        if (!std::isfinite(v)) {
          throw CheckpointError("array " + std::string(shapes[i].name) + " holds a non-finite value");
        }
        m(r, c) = static_cast<double>(v);
      }
    }
  }
  if (pos != bytes.size()) throw CheckpointError("checkpoint has trailing bytes after the last array");
  if (!(p.norm.std > 0.0)) throw CheckpointError("checkpoint norm std must be positive");
  return p;
}

ModelParams load_checkpoint(const std::filesystem::path& path,
                            const std::optional<ModelConfig>& expected) {
  std::string bytes;
  try {
    bytes = read_file(path.string());
  } catch (const InputError& e) {
    throw CheckpointError(e.what());
  }
  return deserialize_checkpoint(bytes, expected);
}

}  // namespace dirinet
