#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sapo/policy.hpp"

namespace sapo {

namespace {

constexpr char kMagic[8] = {'S', 'A', 'P', 'O', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

template <class T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw PolicyError("truncated checkpoint");
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::vector<double> doubles(std::size_t n) {
    if (pos_ + n * sizeof(double) > bytes_.size()) throw PolicyError("truncated checkpoint");
    std::vector<double> v(n);
    std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const PolicyState& state) {
  state.validate();
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::int32_t>(out, state.arch.layers);
  put<std::int32_t>(out, state.arch.hidden);
  put<std::int32_t>(out, state.arch.embedding);
  put<std::int32_t>(out, state.arch.context);
  put<std::int64_t>(out, state.step);
  put<std::uint64_t>(out, state.params.size());
  for (const auto* v : {&state.params, &state.adam_m, &state.adam_v})
    out.append(reinterpret_cast<const char*>(v->data()), v->size() * sizeof(double));
  return out;
}

PolicyState decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw PolicyError("not a policy checkpoint");
  }
  Reader in(bytes.substr(sizeof(kMagic)));
  const auto version = in.get<std::uint32_t>();
  if (version != kVersion) throw PolicyError("unsupported checkpoint version " + std::to_string(version));
  PolicyState s;
  s.arch.layers = in.get<std::int32_t>();
  s.arch.hidden = in.get<std::int32_t>();
  s.arch.embedding = in.get<std::int32_t>();
  s.arch.context = in.get<std::int32_t>();
  s.step = in.get<std::int64_t>();
  const auto n = in.get<std::uint64_t>();
  if (n != ParamLayout(s.arch).total) throw PolicyError("checkpoint parameter count does not match architecture");
  s.params = in.doubles(n);
  s.adam_m = in.doubles(n);
  s.adam_v = in.doubles(n);
  if (!in.done()) throw PolicyError("trailing bytes in checkpoint");
  s.validate();
  return s;
}

void save_checkpoint(const PolicyState& state, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(state);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PolicyError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw PolicyError("write failed for " + path.string());
}

PolicyState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PolicyError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

}  // namespace sapo
