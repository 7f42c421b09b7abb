#include "llab/checkpoint.hpp"

#include <cstring>

#include "llab/errors.hpp"
#include "llab/io.hpp"

namespace llab {

namespace {

constexpr char kMagic[4] = {'L', 'L', 'A', 'B'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kKindModel = 0;
constexpr std::uint8_t kKindDataset = 1;
constexpr std::uint8_t kDtypeF32 = 0;
constexpr std::uint8_t kDtypeQ16 = 1;

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void i16(std::int16_t v) {
        const std::uint16_t bits = static_cast<std::uint16_t>(v);
        out_.push_back(static_cast<char>(bits & 0xff));
        out_.push_back(static_cast<char>((bits >> 8) & 0xff));
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out_.append(s);
    }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}
    std::uint8_t u8() { return static_cast<std::uint8_t>(byte()); }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
        return v;
    }
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::int16_t i16() {
        std::uint16_t v = static_cast<std::uint16_t>(byte());
        v |= static_cast<std::uint16_t>(byte()) << 8;
        return static_cast<std::int16_t>(v);
    }
    std::string str() {
        const std::uint32_t n = u32();
        if (pos_ + n > bytes_.size()) throw ConfigError("truncated container string");
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

private:
    unsigned char byte() {
        if (pos_ >= bytes_.size()) throw ConfigError("truncated container");
        return static_cast<unsigned char>(bytes_[pos_++]);
    }
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

void write_header(Writer& w, std::uint8_t kind) {
    w.u8(static_cast<std::uint8_t>(kMagic[0]));
    w.u8(static_cast<std::uint8_t>(kMagic[1]));
    w.u8(static_cast<std::uint8_t>(kMagic[2]));
    w.u8(static_cast<std::uint8_t>(kMagic[3]));
    w.u32(kVersion);
    w.u8(kind);
}

std::uint8_t read_header(Reader& r) {
    char magic[4];
    for (char& c : magic) c = static_cast<char>(r.u8());
    if (std::memcmp(magic, kMagic, 4) != 0) throw ConfigError("bad container magic");
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw ConfigError("unsupported container version " + std::to_string(version));
    return r.u8();
}

void write_tensor_record(Writer& w, const std::string& name, const Tensor& t) {
    w.str(name);
    w.u8(kDtypeF32);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (std::int64_t d : t.shape) w.i64(d);
    for (float v : t.data) w.f32(v);
}

}  // namespace

std::string encode_checkpoint(const ModelGraph& model, const ParamVector& params,
                              const ModelQuant& quant, std::uint64_t seed,
                              const std::string& config_echo) {
    if (params.size() != model.param_count())
        throw ConfigError("checkpoint params do not match model layout");
    Writer w;
    write_header(w, kKindModel);
    w.str(model.spec().name);
    w.u64(seed);
    w.str(config_echo);

    const auto& segs = model.layout()->segments();
    w.u32(static_cast<std::uint32_t>(segs.size()));
    for (std::size_t i = 0; i < segs.size(); ++i) {
        const Segment& seg = segs[i];
        const Tensor t = params.segment_tensor(static_cast<int>(i));
        const QuantSpec* qs = quant.active() ? quant.spec_for(static_cast<int>(i)) : nullptr;
        if (qs) {
            w.str(seg.name);
            w.u8(kDtypeQ16);
            w.u32(static_cast<std::uint32_t>(t.shape.size()));
            for (std::int64_t d : t.shape) w.i64(d);
            w.f32(qs->scale);
            w.u8(static_cast<std::uint8_t>(qs->bits));
            const QuantizedTensor q = quantize(t, *qs);
            for (std::int16_t c : q.codes) w.i16(c);
        } else {
            write_tensor_record(w, seg.name, t);
        }
    }
    return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    if (read_header(r) != kKindModel) throw ConfigError("container does not hold a model");
    Checkpoint ck;
    ck.model_name = r.str();
    ck.seed = r.u64();
    ck.config_echo = r.str();

    ModelGraph model(zoo_has(ck.model_name) ? zoo_spec(ck.model_name)
                                            : throw ConfigError("checkpoint references unknown "
                                                                "model spec '" +
                                                                ck.model_name + "'"));
    ck.params = ParamVector(model.layout());
    const std::uint32_t n_records = r.u32();
    const auto& segs = model.layout()->segments();
    if (n_records != segs.size())
        throw ConfigError("checkpoint record count does not match model layout");

    for (std::uint32_t i = 0; i < n_records; ++i) {
        const std::string name = r.str();
        const int seg_idx = model.layout()->find(name);
        if (seg_idx < 0) throw ConfigError("checkpoint record '" + name + "' not in layout");
        const Segment& seg = segs[static_cast<std::size_t>(seg_idx)];
        const std::uint8_t dtype = r.u8();
        const std::uint32_t rank = r.u32();
        std::vector<std::int64_t> shape(rank);
        for (auto& d : shape) d = r.i64();
        if (shape != seg.shape)
            throw ConfigError("checkpoint record '" + name + "' shape mismatch");
        Tensor t(shape);
        if (dtype == kDtypeF32) {
            for (auto& v : t.data) v = r.f32();
        } else if (dtype == kDtypeQ16) {
            QuantSpec spec;
            spec.scale = r.f32();
            spec.bits = static_cast<int>(r.u8());
            QuantizedTensor q;
            q.shape = shape;
            q.spec = spec;
            q.codes.resize(t.data.size());
            for (auto& c : q.codes) c = r.i16();
            t = dequantize(q);
            ck.quant.bits = spec.bits;
            ck.quant.per_segment[seg_idx] = spec;
        } else {
            throw ConfigError("unknown dtype tag in checkpoint");
        }
        ck.params.set_segment(seg_idx, t);
    }
    return ck;
}

void save_checkpoint(const std::string& path, const ModelGraph& model, const ParamVector& params,
                     const ModelQuant& quant, std::uint64_t seed, const std::string& config_echo) {
    atomic_write_file(path, encode_checkpoint(model, params, quant, seed, config_echo));
}

Checkpoint load_checkpoint(const std::string& path) {
    return decode_checkpoint(read_file(path));
}

std::string encode_dataset(const Dataset& data) {
    Writer w;
    write_header(w, kKindDataset);
    w.str(data.task);
    w.u64(data.seed);
    w.u32(4);
    write_tensor_record(w, "train_inputs", data.train_inputs);
    write_tensor_record(w, "train_targets", data.train_targets);
    write_tensor_record(w, "test_inputs", data.test_inputs);
    write_tensor_record(w, "test_targets", data.test_targets);
    return w.take();
}

Dataset decode_dataset(const std::string& bytes) {
    Reader r(bytes);
    if (read_header(r) != kKindDataset) throw ConfigError("container does not hold a dataset");
    Dataset data;
    data.task = r.str();
    data.seed = r.u64();
    const std::uint32_t n = r.u32();
    if (n != 4) throw ConfigError("dataset container must hold 4 records");
    for (std::uint32_t i = 0; i < 4; ++i) {
        const std::string name = r.str();
        if (r.u8() != kDtypeF32) throw ConfigError("dataset records must be f32");
        const std::uint32_t rank = r.u32();
        std::vector<std::int64_t> shape(rank);
        for (auto& d : shape) d = r.i64();
        Tensor t(shape);
        for (auto& v : t.data) v = r.f32();
        if (name == "train_inputs") data.train_inputs = std::move(t);
        else if (name == "train_targets") data.train_targets = std::move(t);
        else if (name == "test_inputs") data.test_inputs = std::move(t);
        else if (name == "test_targets") data.test_targets = std::move(t);
        else throw ConfigError("unknown dataset record '" + name + "'");
    }
    return data;
}

void save_dataset(const std::string& path, const Dataset& data) {
    atomic_write_file(path, encode_dataset(data));
}

Dataset load_dataset(const std::string& path) {
    return decode_dataset(read_file(path));
}

}  // namespace llab
