#include "wildgs/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "wildgs/errors.hpp"

namespace wildgs {

namespace {

constexpr char kMagic[4] = {'W', 'G', 'S', '1'};

template <class T>
void put(std::vector<unsigned char>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(std::vector<unsigned char> data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(data_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) {
    if (data_.size() - pos_ < n) throw IoError("truncated checkpoint " + path_);
  }
  std::vector<unsigned char> data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const nn::ParamList& tensors) {
  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (int e : t.shape()) put<std::uint64_t>(out, static_cast<std::uint64_t>(e));
    for (double v : t.values()) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("cannot write checkpoint " + path);
}

nn::ParamList load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path);
  Reader r(std::vector<unsigned char>(std::istreambuf_iterator<char>(f), {}), path);
  if (r.bytes(4) != std::string(kMagic, 4)) throw IoError("checkpoint " + path + ": bad magic or version");
  const std::uint32_t count = r.get<std::uint32_t>();
  nn::ParamList out;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::string name = r.bytes(r.get<std::uint32_t>());
    const std::uint32_t rank = r.get<std::uint32_t>();
    ad::Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(r.get<std::uint64_t>()));
    std::vector<double> values(ad::numel_of(shape));
    for (double& v : values) v = std::bit_cast<double>(r.get<std::uint64_t>());
    out.push_back({name, ad::Tensor(shape, std::move(values))});
  }
  if (!r.done()) throw IoError("checkpoint " + path + ": trailing bytes");
  return out;
}

}  // namespace wildgs
