#include "ccgan/nn/weights_io.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "ccgan/errors.hpp"
#include "ccgan/frame_io.hpp"

namespace ccgan::nn {
namespace {

constexpr char kMagic[8] = {'C', 'C', 'G', 'W', 'T', 'S', 0, 1};
constexpr std::uint32_t kGenerator = 0;
constexpr std::uint32_t kDiscriminator = 1;

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  return out;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  std::uint8_t b[4];
  std::memcpy(b, &v, 4);
  out.insert(out.end(), b, b + 4);
}

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open weight file " + path.string());
    bytes_.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  }
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError(path_.string() + ": truncated weight file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_), bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  void floats(float* dst, std::size_t n) {
    need(n * 4);
    std::memcpy(dst, bytes_.data() + pos_, n * 4);
    pos_ += n * 4;
  }
  bool done() const { return pos_ == bytes_.size(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

WeightHeader read_header(Reader& r) {
  if (r.str(8) != std::string(kMagic, 8)) throw DataError(r.path().string() + ": not a weight file");
  const auto version = r.u32();
  if (version != kWeightFormatVersion) throw DataError(r.path().string() + ": unsupported weight format version");
  WeightHeader h;
  h.kind = r.u32();
  std::istringstream text(r.str(r.u32()));
  std::string line;
  while (std::getline(text, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    h.fields[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return h;
}

std::string init_text(const InitRecord& init) {
  std::ostringstream ss;
  ss.precision(17);
  ss << "init.distribution=" << init.distribution << "\ninit.mean=" << init.mean << "\ninit.stddev=" << init.stddev
     << "\ninit.seed=" << init.seed << "\n";
  return ss.str();
}

template <class T>
void save_store(const std::filesystem::path& path, std::uint32_t kind, const std::string& header,
                const ParameterStore<T>& store) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put_u32(out, kWeightFormatVersion);
  put_u32(out, kind);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  put_u32(out, static_cast<std::uint32_t>(store.entries().size() + store.buffers().size()));
  auto grid = [&](const std::string& name, const Tensor<T>& t) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    const Shape s = t.shape();
    for (int d : {s.n, s.c, s.h, s.w}) put_u32(out, static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < t.size(); ++i) {
      const float f = static_cast<float>(t[i]);
      std::uint8_t b[4];
      std::memcpy(b, &f, 4);
      out.insert(out.end(), b, b + 4);
    }
  };
  for (const auto& e : store.entries()) grid(e.name, e.var.value());
  for (const auto& b : store.buffers()) grid(b.name, *b.tensor);
  write_file_atomic(path, out);
}

template <class T>
void load_store(Reader& r, ParameterStore<T>& store) {
  const auto count = r.u32();
  if (count != store.entries().size() + store.buffers().size()) {
    throw DataError(r.path().string() + ": grid count does not match the network");
  }
  std::vector<float> scratch;
  auto grid = [&](const std::string& expected, Tensor<T>& t) {
    const auto name = r.str(r.u32());
    if (name != expected) throw DataError(r.path().string() + ": expected grid '" + expected + "', found '" + name + "'");
    Shape s;
    s.n = static_cast<int>(r.u32());
    s.c = static_cast<int>(r.u32());
    s.h = static_cast<int>(r.u32());
    s.w = static_cast<int>(r.u32());
    if (!(s == t.shape())) {
      throw DataError(r.path().string() + ": grid '" + name + "' has shape " + to_string(s) + ", network expects " +
                      to_string(t.shape()));
    }
    scratch.resize(t.size());
    r.floats(scratch.data(), scratch.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(scratch[i]);
  };
  for (auto& e : store.entries()) grid(e.name, e.var.mutable_value());
  for (const auto& b : store.buffers()) grid(b.name, *b.tensor);
  if (!r.done()) throw DataError(r.path().string() + ": trailing bytes in weight file");
}

int field_int(const WeightHeader& h, const std::string& key) {
  auto it = h.fields.find(key);
  if (it == h.fields.end()) throw DataError("weight header is missing '" + key + "'");
  return std::stoi(it->second);
}

}  // namespace

std::string describe(const GeneratorSpec& s) {
  std::ostringstream ss;
  ss << "network=generator\nbase_channels=" << s.base_channels << "\nn_modules=" << s.n_modules
     << "\nconvs_per_module=" << s.convs_per_module << "\nkernel=" << s.kernel << "\nin_channels=" << s.in_channels
     << "\nconcat_width=" << s.concat_width() << "\n";
  return ss.str();
}

std::string describe(const DiscriminatorSpec& s) {
  std::ostringstream ss;
  ss << "network=discriminator\nchannels=" << join(s.channels) << "\nstrides=" << join(s.strides)
     << "\nkernel=" << s.kernel << "\npadding=" << s.padding << "\nleaky_slope=" << s.leaky_slope
     << "\nmin_input=" << s.min_input << "\nin_channels=" << s.in_channels << "\n";
  return ss.str();
}

template <class T>
void save_generator(const std::filesystem::path& path, const Generator<T>& g) {
  save_store(path, kGenerator,
             "format_version=" + std::to_string(kWeightFormatVersion) + "\n" + describe(g.spec()) + init_text(g.init_record()),
             g.store());
}

template <class T>
void save_discriminator(const std::filesystem::path& path, const Discriminator<T>& d) {
  save_store(path, kDiscriminator,
             "format_version=" + std::to_string(kWeightFormatVersion) + "\n" + describe(d.spec()) + init_text(d.init_record()),
             d.store());
}

WeightHeader read_weight_header(const std::filesystem::path& path) {
  Reader r(path);
  return read_header(r);
}

GeneratorSpec generator_spec_from_header(const WeightHeader& h) {
  if (h.kind != kGenerator) throw DataError("weight file does not hold a generator");
  GeneratorSpec s;
  s.base_channels = field_int(h, "base_channels");
  s.n_modules = field_int(h, "n_modules");
  s.convs_per_module = field_int(h, "convs_per_module");
  s.kernel = field_int(h, "kernel");
  s.in_channels = field_int(h, "in_channels");
  return s;
}

DiscriminatorSpec discriminator_spec_from_header(const WeightHeader& h) {
  if (h.kind != kDiscriminator) throw DataError("weight file does not hold a discriminator");
  DiscriminatorSpec s;
  s.channels = split_ints(h.fields.at("channels"));
  s.strides = split_ints(h.fields.at("strides"));
  s.kernel = field_int(h, "kernel");
  s.padding = field_int(h, "padding");
  s.leaky_slope = std::stod(h.fields.at("leaky_slope"));
  s.min_input = field_int(h, "min_input");
  s.in_channels = field_int(h, "in_channels");
  return s;
}

template <class T>
void load_into(const std::filesystem::path& path, Generator<T>& g) {
  Reader r(path);
  const auto h = read_header(r);
  const auto spec = generator_spec_from_header(h);
  if (!(spec == g.spec())) {
    throw DataError(path.string() + ": weights were saved for a different generator spec (base_channels " +
                    std::to_string(spec.base_channels) + " vs " + std::to_string(g.spec().base_channels) + ")");
  }
  load_store(r, g.store());
}

template <class T>
void load_into(const std::filesystem::path& path, Discriminator<T>& d) {
  Reader r(path);
  const auto h = read_header(r);
  if (!(discriminator_spec_from_header(h) == d.spec())) {
    throw DataError(path.string() + ": weights were saved for a different discriminator spec");
  }
  load_store(r, d.store());
}

template <class T>
std::unique_ptr<Generator<T>> load_generator(const std::filesystem::path& path) {
  const auto h = read_weight_header(path);
  const auto spec = generator_spec_from_header(h);
  std::uint64_t seed = 0;
  if (auto it = h.fields.find("init.seed"); it != h.fields.end()) seed = std::stoull(it->second);
  auto g = std::make_unique<Generator<T>>(spec, seed);
  load_into(path, *g);
  return g;
}

template void save_generator<float>(const std::filesystem::path&, const Generator<float>&);
template void save_generator<double>(const std::filesystem::path&, const Generator<double>&);
template void save_discriminator<float>(const std::filesystem::path&, const Discriminator<float>&);
template void save_discriminator<double>(const std::filesystem::path&, const Discriminator<double>&);
template void load_into<float>(const std::filesystem::path&, Generator<float>&);
template void load_into<double>(const std::filesystem::path&, Generator<double>&);
template void load_into<float>(const std::filesystem::path&, Discriminator<float>&);
template void load_into<double>(const std::filesystem::path&, Discriminator<double>&);
template std::unique_ptr<Generator<float>> load_generator<float>(const std::filesystem::path&);
template std::unique_ptr<Generator<double>> load_generator<double>(const std::filesystem::path&);

}  // namespace ccgan::nn
