#include "morphnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "morphnet/config.hpp"

namespace morphnet {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

bool Checkpoint::has_prefix(const std::string& prefix) const {
  const std::string p = prefix + ".";
  for (const auto& t : tensors) {
    if (t.name.compare(0, p.size(), p) == 0) return true;
  }
  return false;
}

void append_network(Checkpoint& ck, const std::string& prefix, const GcntNetwork& net) {
  for (const auto& p : net.params()) ck.tensors.push_back({prefix + "." + p.name, p.value});
}

void restore_network(const Checkpoint& ck, const std::string& prefix, GcntNetwork& net) {
  for (auto& p : net.params()) {
    const NamedTensor* t = ck.find(prefix + "." + p.name);
    if (!t) throw ContractError("checkpoint lacks tensor " + prefix + "." + p.name);
    if (t->value.rows() != p.value.rows() || t->value.cols() != p.value.cols()) {
      throw ContractError("checkpoint tensor " + t->name + " has shape " + t->value.shape_string() + ", expected " +
                          p.value.shape_string());
    }
    p.value = t->value;
  }
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(std::string bytes, std::string origin) : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

  void take(void* dst, std::size_t n) {
    if (pos_ + n > bytes_.size()) throw ParseError(origin_ + ": truncated checkpoint");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    take(&v, 4);
    return v;
  }
  std::string string() {
    const std::uint32_t n = u32();
    if (n > bytes_.size() - pos_) throw ParseError(origin_ + ": truncated checkpoint");
    std::string s(n, '\0');
    take(s.data(), n);
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  std::ostringstream text;
  text << "[net]\n";
  for (const auto& [k, v] : net_entries(ck.net)) text << k << " = " << v << "\n";
  text << "\n[meta]\n";
  for (const auto& [k, v] : ck.meta) text << k << " = " << v << "\n";

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write("GCNT", 4);
  put_u32(out, kCheckpointVersion);
  put_string(out, text.str());
  put_u32(out, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    put_string(out, t.name);
    put_u32(out, static_cast<std::uint32_t>(t.value.rows()));
    put_u32(out, static_cast<std::uint32_t>(t.value.cols()));
    out.write(reinterpret_cast<const char*>(t.value.data()), static_cast<std::streamsize>(t.value.size() * 8));
  }
  if (!out) throw std::runtime_error("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  Reader r(ss.str(), path.string());

  char magic[4];
  r.take(magic, 4);
  if (std::memcmp(magic, "GCNT", 4) != 0) throw ParseError(path.string() + ": not a GCNT checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw ParseError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  try {
    const IniDocument doc = parse_ini(r.string(), path.string());
    if (const auto* net = doc.find("net")) {
      for (const auto& e : net->entries) set_net_key(ck.net, e.key, e.value);
    }
    if (const auto* meta = doc.find("meta")) {
      for (const auto& e : meta->entries) ck.meta[e.key] = e.value;
    }
  } catch (const ConfigError& e) {
    throw ParseError(std::string("checkpoint config block: ") + e.what());
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.string();
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (static_cast<std::uint64_t>(rows) * cols * 8 > r.remaining()) {
      throw ParseError(path.string() + ": truncated checkpoint");
    }
    t.value = ad::Matrix(rows, cols);
    r.take(t.value.data(), t.value.size() * 8);
    ck.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw ParseError(path.string() + ": trailing bytes after tensors");
  return ck;
}

}  // namespace morphnet
