#pragma once

// Self-describing tensor container used for checkpoints, task fixtures,
// recordings and analysis outputs.
//
//   IP2TENSOR 1
//   meta <key> <value...>          (any number, in insertion order)
//   tensor <name> <rows> <cols>    (declaration order = payload order)
//   end
//   <payload: each tensor's entries as little-endian IEEE-754 binary64,
//    row-major>
//
// Keys and tensor names contain no whitespace; values run to end of line.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace ip2rsnn {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TensorArchive {
 public:
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  void set_meta(const std::string& key, const std::string& value) {
    check_token(key);
    if (value.find('\n') != std::string::npos) throw IoError("meta value contains a newline: " + key);
    for (auto& [k, v] : meta_)
      if (k == key) {
        v = value;
        return;
      }
    meta_.emplace_back(key, value);
  }

  bool has_meta(const std::string& key) const {
    for (const auto& kv : meta_)
      if (kv.first == key) return true;
    return false;
  }

  const std::string& meta(const std::string& key) const {
    for (const auto& kv : meta_)
      if (kv.first == key) return kv.second;
    throw IoError("missing meta key: " + key);
  }

  const std::vector<std::pair<std::string, std::string>>& all_meta() const { return meta_; }

  void put(const std::string& name, const Eigen::MatrixXd& m) {
    check_token(name);
    for (auto& [n, t] : tensors_)
      if (n == name) {
        t = m;
        return;
      }
    tensors_.emplace_back(name, RowMat(m));
  }

  void put(const std::string& name, const Eigen::VectorXd& v) {
    put(name, Eigen::MatrixXd(v));
  }

  bool has(const std::string& name) const {
    for (const auto& kv : tensors_)
      if (kv.first == name) return true;
    return false;
  }

  Eigen::MatrixXd get(const std::string& name) const {
    for (const auto& kv : tensors_)
      if (kv.first == name) return Eigen::MatrixXd(kv.second);
    throw IoError("missing tensor: " + name);
  }

  Eigen::VectorXd get_vector(const std::string& name) const {
    const auto m = get(name);
    if (m.cols() != 1 && m.size() != 0) throw IoError("tensor is not a column vector: " + name);
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()));
  }

  std::vector<std::string> tensor_names() const {
    std::vector<std::string> out;
    for (const auto& kv : tensors_) out.push_back(kv.first);
    return out;
  }

  std::string serialize() const {
    std::ostringstream os;
    os << "IP2TENSOR 1\n";
    for (const auto& [k, v] : meta_) os << "meta " << k << ' ' << v << '\n';
    for (const auto& [n, t] : tensors_) os << "tensor " << n << ' ' << t.rows() << ' ' << t.cols() << '\n';
    os << "end\n";
    std::string out = os.str();
    for (const auto& kv : tensors_) {
      const auto& t = kv.second;
      for (Eigen::Index i = 0; i < t.size(); ++i) append_le(out, t.data()[i]);
    }
    return out;
  }

  static TensorArchive deserialize(const std::string& bytes) {
    TensorArchive a;
    std::size_t pos = 0;
    auto next_line = [&]() {
      const auto nl = bytes.find('\n', pos);
      if (nl == std::string::npos) throw IoError("truncated tensor header");
      std::string line = bytes.substr(pos, nl - pos);
      pos = nl + 1;
      return line;
    };
    if (next_line() != "IP2TENSOR 1") throw IoError("not an IP2TENSOR v1 container");
    std::vector<std::pair<std::string, std::pair<Eigen::Index, Eigen::Index>>> decl;
    for (;;) {
      const std::string line = next_line();
      if (line == "end") break;
      if (line.rfind("meta ", 0) == 0) {
        const auto rest = line.substr(5);
        const auto sp = rest.find(' ');
        if (sp == std::string::npos) throw IoError("malformed meta line: " + line);
        a.meta_.emplace_back(rest.substr(0, sp), rest.substr(sp + 1));
      } else if (line.rfind("tensor ", 0) == 0) {
        std::istringstream is(line.substr(7));
        std::string name;
        long long r = -1, c = -1;
        if (!(is >> name >> r >> c) || r < 0 || c < 0) throw IoError("malformed tensor line: " + line);
        decl.push_back({name, {r, c}});
      } else {
        throw IoError("unexpected header line: " + line);
      }
    }
    for (const auto& [name, shape] : decl) {
      RowMat t(shape.first, shape.second);
      const auto need = static_cast<std::size_t>(t.size()) * 8;
      if (bytes.size() - pos < need) throw IoError("truncated payload for tensor " + name);
      for (Eigen::Index i = 0; i < t.size(); ++i) {
        t.data()[i] = read_le(bytes.data() + pos);
        pos += 8;
      }
      a.tensors_.emplace_back(name, std::move(t));
    }
    if (pos != bytes.size()) throw IoError("trailing bytes after payload");
    return a;
  }

  void save(const std::filesystem::path& path) const {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
      std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
      if (!os) throw IoError("cannot open for writing: " + tmp.string());
      const auto bytes = serialize();
      os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      if (!os) throw IoError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
  }

  static TensorArchive load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    try {
      return deserialize(ss.str());
    } catch (const IoError& e) {
      throw IoError(path.string() + ": " + e.what());
    }
  }

 private:
  static void check_token(const std::string& s) {
    if (s.empty() || s.find_first_of(" \t\n\r") != std::string::npos)
      throw IoError("invalid key or tensor name: '" + s + "'");
  }

  static void append_le(std::string& out, double x) {
    std::uint64_t u;
    std::memcpy(&u, &x, 8);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((u >> (8 * b)) & 0xFF));
  }

  static double read_le(const char* p) {
    std::uint64_t u = 0;
    for (int b = 0; b < 8; ++b) u |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[b])) << (8 * b);
    double x;
    std::memcpy(&x, &u, 8);
    return x;
  }

  std::vector<std::pair<std::string, std::string>> meta_;
  std::vector<std::pair<std::string, RowMat>> tensors_;
};

}  // namespace ip2rsnn
