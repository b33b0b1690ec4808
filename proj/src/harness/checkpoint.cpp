#include "harness/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "core/error.hpp"

namespace pdistill {
namespace {

constexpr char kMagic[4] = {'P', 'D', 'W', 'N'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str32(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& in, std::size_t end) : in_(in), end_(end) {}

  void need(std::uint64_t n) const {
    if (n > end_ - pos_) fail(ErrorCode::kCheckpointTruncated, "checkpoint is truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::uint64_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in pieces.
  while (n > 0) {
    const auto piece = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, piece);
    data += piece;
    n -= piece;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  require(!ckpt.kind().empty(), "checkpoint config needs a kind");
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  const std::string blob = ckpt.config.serialize();
  w.u64(blob.size());
  w.bytes(blob.data(), blob.size());
  w.u32(static_cast<std::uint32_t>(ckpt.entries.size()));
  for (const CheckpointEntry& e : ckpt.entries) {
    std::size_t count = 1;
    for (const std::size_t d : e.shape) count *= d;
    require(count == e.values.size(), "checkpoint entry " + e.name + " has the wrong number of values");
    w.str32(e.name);
    w.u32(static_cast<std::uint32_t>(e.shape.size()));
    for (const std::size_t d : e.shape) w.u64(d);
    for (const double v : e.values) w.f64(v);
  }
  w.u64(ckpt.step);
  w.u64(ckpt.rng.seed);
  w.u64(ckpt.rng.stream);
  w.u64(ckpt.rng.counter);
  w.u32(crc32_of(w.out.data(), w.out.size()));
  return std::move(w.out);
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4) fail(ErrorCode::kCheckpointTruncated, "checkpoint is truncated");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) fail(ErrorCode::kCheckpointMagic, "not a checkpoint (bad magic)");
  if (bytes.size() < 8) fail(ErrorCode::kCheckpointTruncated, "checkpoint is truncated");
  // The last four bytes are the CRC; everything else is payload.
  Reader r(bytes, bytes.size() < 12 ? 8 : bytes.size() - 4);
  r.str(4);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    fail(ErrorCode::kCheckpointVersion, "unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const std::uint64_t blob_len = r.u64();
  ckpt.config = KeyValues::parse(r.str(blob_len));
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    r.need(8ull * rank);
    std::uint64_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const std::uint64_t d = r.u64();
      e.shape.push_back(static_cast<std::size_t>(d));
      if (d != 0 && n > (UINT64_MAX / 8) / d) fail(ErrorCode::kCheckpointTruncated, "checkpoint is truncated");
      n *= d;
    }
    r.need(8 * n);
    e.values.resize(n);
    for (double& v : e.values) v = r.f64();
    ckpt.entries.push_back(std::move(e));
  }
  ckpt.step = r.u64();
  ckpt.rng.seed = r.u64();
  ckpt.rng.stream = r.u64();
  ckpt.rng.counter = r.u64();
  if (r.pos() + 4 != bytes.size()) {
    fail(r.pos() + 4 > bytes.size() ? ErrorCode::kCheckpointTruncated : ErrorCode::kCheckpointChecksum,
         "checkpoint has unexpected trailing bytes");
  }
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[r.pos() + i]) << (8 * i);
  if (stored != crc32_of(bytes.data(), r.pos())) fail(ErrorCode::kCheckpointChecksum, "checkpoint checksum mismatch");
  if (ckpt.kind().empty()) fail(ErrorCode::kCheckpointKind, "checkpoint does not name its kind");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::vector<std::uint8_t> bytes = encode_checkpoint(ckpt);
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::kIo, "failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::kIo, "cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const Error& e) {
    fail(e.code(), path.string() + ": " + e.what());
  }
}

void expect_kind(const Checkpoint& ckpt, const std::string& kind) {
  if (ckpt.kind() != kind) {
    fail(ErrorCode::kCheckpointKind, "expected a " + kind + " checkpoint, found " + ckpt.kind());
  }
}

void store_parameters(Checkpoint& ckpt, const ParameterSet& params) {
  for (const Parameter& p : params) {
    ckpt.entries.push_back({p.name, p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()}});
  }
}

void restore_parameters(const Checkpoint& ckpt, ParameterSet& params) {
  std::set<std::string> seen;
  for (const CheckpointEntry& e : ckpt.entries) {
    if (!params.contains(e.name)) fail(ErrorCode::kShapeMismatch, "checkpoint has unknown parameter " + e.name);
    Tensor& t = params.at(e.name);
    if (t.shape() != e.shape) {
      fail(ErrorCode::kShapeMismatch, "parameter " + e.name + " is " + shape_string(t.shape()) +
                                          " but the checkpoint holds " + shape_string(e.shape));
    }
    std::copy(e.values.begin(), e.values.end(), t.mutable_data().begin());
    seen.insert(e.name);
  }
  if (seen.size() != params.size()) fail(ErrorCode::kShapeMismatch, "checkpoint is missing parameters");
}

}  // namespace pdistill
