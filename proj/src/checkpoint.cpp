#include "leaf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace leaf {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'L', 'E', 'A', 'F'};
constexpr std::uint8_t kF32 = 0;
constexpr std::uint8_t kF64 = 1;

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void u8(std::uint8_t v) { out.push_back(v); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    std::vector<std::uint8_t> out;
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

    void bytes(void* dst, std::size_t n) {
        if (b_.size() - pos_ < n) {
            throw DataError("checkpoint truncated at byte " + std::to_string(pos_) + " while reading " +
                            std::to_string(n) + " bytes");
        }
        std::memcpy(dst, b_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        bytes(&v, 4);
        return v;
    }
    std::uint8_t u8() {
        std::uint8_t v = 0;
        bytes(&v, 1);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        if (n > b_.size() - pos_) throw DataError("checkpoint string length exceeds file size");
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    bool done() const { return pos_ == b_.size(); }

private:
    const std::vector<std::uint8_t>& b_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    Writer w;
    w.bytes(kMagic, 4);
    w.u32(kCheckpointVersion);
    w.str(format_config(ckpt.config));
    w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& t : ckpt.tensors) {
        w.str(t.name);
        w.u8(std::is_same_v<Real, float> ? kF32 : kF64);
        w.u32(static_cast<std::uint32_t>(t.value.rank()));
        for (Index e : t.value.shape()) w.u32(static_cast<std::uint32_t>(e));
        w.bytes(t.value.raw(), static_cast<std::size_t>(t.value.size()) * sizeof(Real));
    }
    return std::move(w.out);
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw DataError("not a LEAF checkpoint (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ckpt;
    try {
        ckpt.config = parse_config_text(r.str());
    } catch (const ConfigError& e) {
        throw DataError(std::string("checkpoint config block: ") + e.what());
    }
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        t.name = r.str();
        const std::uint8_t dtype = r.u8();
        if (dtype != kF32 && dtype != kF64) throw DataError("tensor " + t.name + ": unknown dtype tag");
        const std::uint32_t rank = r.u32();
        if (rank == 0 || rank > 8) throw DataError("tensor " + t.name + ": bad rank " + std::to_string(rank));
        Shape shape(rank);
        for (auto& e : shape) {
            e = r.u32();
            if (e == 0) throw DataError("tensor " + t.name + ": zero extent");
        }
        const auto n = static_cast<std::size_t>(shape_numel(shape));
        std::vector<Real> data(n);
        if (dtype == kF64) {
            std::vector<double> raw(n);
            r.bytes(raw.data(), n * sizeof(double));
            for (std::size_t k = 0; k < n; ++k) data[k] = static_cast<Real>(raw[k]);
        } else {
            std::vector<float> raw(n);
            r.bytes(raw.data(), n * sizeof(float));
            for (std::size_t k = 0; k < n; ++k) data[k] = static_cast<Real>(raw[k]);
        }
        t.value = Tensor(std::move(shape), std::move(data));
        ckpt.tensors.push_back(std::move(t));
    }
    if (!r.done()) throw DataError("trailing bytes after checkpoint tensor table");
    return ckpt;
}

Checkpoint make_checkpoint(const LeafModel& model) {
    Checkpoint ckpt;
    ckpt.config = model_config_to_map(model.config());
    for (const auto& p : model.params().params()) ckpt.tensors.push_back({p.name, p.var.value()});
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const LeafModel& model) {
    const auto bytes = encode_checkpoint(make_checkpoint(model));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + path.string());
}

std::unique_ptr<LeafModel> model_from_checkpoint(const Checkpoint& ckpt) {
    ModelConfig cfg;
    try {
        cfg = model_config_from_map(ckpt.config);
    } catch (const ConfigError& e) {
        throw DataError(std::string("checkpoint config: ") + e.what());
    }
    auto model = std::make_unique<LeafModel>(cfg);
    auto& params = model->params().params();
    if (params.size() != ckpt.tensors.size()) {
        throw DataError("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                        std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& t = ckpt.tensors[i];
        if (t.name != params[i].name) throw DataError("checkpoint tensor " + t.name + " where " + params[i].name + " was expected");
        if (t.value.shape() != params[i].var.shape()) {
            throw DataError("tensor " + t.name + " has shape " + shape_str(t.value.shape()) + ", model expects " +
                            shape_str(params[i].var.shape()));
        }
        params[i].var.mutable_value() = t.value;
    }
    return model;
}

std::unique_ptr<LeafModel> load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    try {
        return model_from_checkpoint(decode_checkpoint(bytes));
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace leaf
