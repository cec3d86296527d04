// Binary model file:
//
//   "STNE"                       magic
//   u32 version
//   u32 length, bytes            key=value lines (config, floor plan, split)
//   u32 parameter count
//     u32 name length, name, u32 rank, u32 dims[rank], f32 values[]
//   u32 index entry count
//     f32 embedding[embed_dim], i32 rp_id, f64 x, f64 y
//   u32 CRC-32 of every preceding byte
//
// All integers and floats are little-endian.

#include <zlib.h>

#include <bit>
#include <charconv>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "csv_util.hpp"
#include "stone/localizer.hpp"

namespace stone {

namespace {

constexpr std::uint8_t kMagic[4] = {'S', 'T', 'N', 'E'};
constexpr std::size_t kMaxName = 256;
constexpr std::size_t kMaxRank = 8;

class Writer {
public:
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        buf_.insert(buf_.end(), p, p + n);
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    std::vector<std::uint8_t>& buffer() { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

    std::span<const std::uint8_t> take(std::size_t n) {
        if (n > data_.size() - pos_) throw ModelFormatError("model file is truncated");
        auto out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }
    std::uint32_t u32() {
        auto b = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        auto b = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
        return v;
    }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str(std::size_t max_len) {
        const std::uint32_t n = u32();
        if (n > max_len) throw ModelFormatError("string field too long");
        auto b = take(n);
        return std::string(b.begin(), b.end());
    }
    bool done() const noexcept { return pos_ == data_.size(); }

private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks for very large buffers.
    std::size_t offset = 0;
    while (offset < bytes.size()) {
        const std::size_t n = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
        crc = crc32(crc, bytes.data() + offset, static_cast<uInt>(n));
        offset += n;
    }
    return static_cast<std::uint32_t>(crc);
}

std::string config_block(const ModelBundle& b) {
    const auto& c = b.model.config();
    std::ostringstream out;
    out << "conv1_filters=" << c.conv1_filters << '\n'
        << "conv2_filters=" << c.conv2_filters << '\n'
        << "fc_units=" << c.fc_units << '\n'
        << "embed_dim=" << c.embed_dim << '\n'
        << "dropout_rate=" << csv::format_double(c.dropout_rate) << '\n'
        << "margin_alpha=" << csv::format_double(c.margin_alpha) << '\n'
        << "noise_sigma=" << csv::format_double(c.noise_sigma) << '\n'
        << "input_side=" << b.model.input_side() << '\n';
    out << "ap_registry=";
    for (std::size_t i = 0; i < b.floorplan.ap_registry.size(); ++i) {
        const auto& id = b.floorplan.ap_registry[i].value;
        if (id.find_first_of(",\n=") != std::string::npos)
            throw ModelFormatError("access point id '" + id + "' cannot be stored");
        out << (i ? "," : "") << id;
    }
    out << '\n' << "rps=";
    for (std::size_t i = 0; i < b.floorplan.rps.size(); ++i) {
        const auto& rp = b.floorplan.rps[i];
        out << (i ? ";" : "") << rp.rp_id << ':' << csv::format_double(rp.x) << ':' << csv::format_double(rp.y);
    }
    out << '\n';
    if (b.split)
        out << "train_ci=" << b.split->train_ci << '\n'
            << "fpr=" << b.split->fpr << '\n'
            << "split_seed=" << b.split->seed << '\n';
    return out.str();
}

std::map<std::string, std::string> parse_block(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ModelFormatError("malformed config line '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

const std::string& require(const std::map<std::string, std::string>& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ModelFormatError("config block lacks '" + key + "'");
    return it->second;
}

template <typename T>
T number(const std::map<std::string, std::string>& kv, const std::string& key) {
    const std::string& s = require(kv, key);
    T v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw ModelFormatError("bad value for '" + key + "'");
    return v;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    if (s.empty()) return out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const ModelBundle& bundle) {
    const std::size_t dim = bundle.model.config().embed_dim;
    Writer w;
    w.bytes(kMagic, sizeof kMagic);
    w.u32(kModelFormatVersion);
    w.str(config_block(bundle));

    const auto& params = bundle.model.parameters();
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        w.str(p.name);
        w.u32(static_cast<std::uint32_t>(p.value.shape.size()));
        for (auto d : p.value.shape) w.u32(static_cast<std::uint32_t>(d));
        for (double v : p.value.values) w.f32(v);
    }

    w.u32(static_cast<std::uint32_t>(bundle.index.size()));
    for (const auto& e : bundle.index.entries) {
        if (e.embedding.size() != dim) throw ModelFormatError("index entry dimension does not match embed_dim");
        for (double v : e.embedding) w.f32(v);
        w.i32(e.rp_id);
        w.f64(e.x);
        w.f64(e.y);
    }

    const std::uint32_t crc = crc_of(w.buffer());
    w.u32(crc);
    return std::move(w.buffer());
}

ModelBundle deserialize_model(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8) throw ModelFormatError("model file is truncated");
    if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
        throw ModelFormatError("not a model file (bad magic)");
    Reader header(bytes.subspan(4, 4));
    const std::uint32_t version = header.u32();
    if (version != kModelFormatVersion)
        throw ModelVersionError("unsupported model format version " + std::to_string(version) + " (expected " +
                                std::to_string(kModelFormatVersion) + ")");
    if (bytes.size() < 12) throw ModelFormatError("model file is truncated");
    const auto body = bytes.first(bytes.size() - 4);
    const std::uint32_t stored = Reader(bytes.last(4)).u32();
    if (crc_of(body) != stored) throw ModelChecksumError("model file checksum mismatch");

    Reader r(body.subspan(8));
    const auto kv = parse_block(r.str(1u << 26));

    EncoderConfig cfg;
    cfg.conv1_filters = number<std::size_t>(kv, "conv1_filters");
    cfg.conv2_filters = number<std::size_t>(kv, "conv2_filters");
    cfg.fc_units = number<std::size_t>(kv, "fc_units");
    cfg.embed_dim = number<std::size_t>(kv, "embed_dim");
    cfg.dropout_rate = number<double>(kv, "dropout_rate");
    cfg.margin_alpha = number<double>(kv, "margin_alpha");
    cfg.noise_sigma = number<double>(kv, "noise_sigma");
    const auto input_side = number<std::size_t>(kv, "input_side");

    ModelBundle bundle;
    for (auto& id : split_on(require(kv, "ap_registry"), ',')) bundle.floorplan.ap_registry.push_back({id});
    for (const auto& item : split_on(require(kv, "rps"), ';')) {
        const auto parts = split_on(item, ':');
        if (parts.size() != 3) throw ModelFormatError("malformed reference point '" + item + "'");
        ReferencePoint rp;
        try {
            rp.rp_id = csv::parse_int(parts[0], 0, "rp_id");
            rp.x = csv::parse_double(parts[1], 0, "x");
            rp.y = csv::parse_double(parts[2], 0, "y");
        } catch (const DatasetError&) {
            throw ModelFormatError("malformed reference point '" + item + "'");
        }
        bundle.floorplan.rps.push_back(rp);
    }
    if (kv.contains("train_ci"))
        bundle.split = SplitProvenance{number<int>(kv, "train_ci"), number<int>(kv, "fpr"),
                                       number<std::uint64_t>(kv, "split_seed")};

    const std::uint32_t n_params = r.u32();
    if (n_params > 64) throw ModelFormatError("implausible parameter count");
    std::vector<Parameter> params;
    for (std::uint32_t k = 0; k < n_params; ++k) {
        Parameter p;
        p.name = r.str(kMaxName);
        const std::uint32_t rank = r.u32();
        if (rank == 0 || rank > kMaxRank) throw ModelFormatError("bad rank for " + p.name);
        std::size_t count = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            p.value.shape.push_back(r.u32());
            count *= p.value.shape.back();
        }
        if (count > (1u << 28)) throw ModelFormatError("implausible size for " + p.name);
        p.value.values.resize(count);
        for (double& v : p.value.values) v = r.f32();
        params.push_back(std::move(p));
    }
    try {
        bundle.model = EncoderModel(cfg, input_side, std::move(params));
    } catch (const ModelFormatError&) {
        throw;
    } catch (const Error& e) {
        throw ModelFormatError(std::string("inconsistent model: ") + e.what());
    }

    const std::uint32_t n_entries = r.u32();
    for (std::uint32_t i = 0; i < n_entries; ++i) {
        IndexEntry e;
        e.embedding.resize(cfg.embed_dim);
        for (double& v : e.embedding) v = r.f32();
        e.rp_id = r.i32();
        e.x = r.f64();
        e.y = r.f64();
        bundle.index.entries.push_back(std::move(e));
    }
    if (!r.done()) throw ModelFormatError("trailing bytes after index");
    return bundle;
}

void save_model(const ModelBundle& bundle, const std::filesystem::path& path) {
    const auto bytes = serialize_model(bundle);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + path.string());
}

ModelBundle load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

}  // namespace stone
