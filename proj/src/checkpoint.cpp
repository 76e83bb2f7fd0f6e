#include "dekan/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "dekan/config_io.hpp"
#include "dekan/error.hpp"

namespace dekan {

namespace {

// All integers and floats are stored little-endian.
class Writer {
public:
    void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(std::string_view in) : in_(in) {}

    void need(std::size_t n, const char* what) {
        if (in_.size() - pos_ < n) {
            throw CheckpointTruncatedError(std::string("file truncated while reading ") + what + " at byte " +
                                           std::to_string(pos_));
        }
    }
    std::string_view bytes(std::size_t n, const char* what) {
        need(n, what);
        auto s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(bytes(1, what)[0]); }
    std::uint32_t u32(const char* what) {
        auto b = bytes(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(b[i])) << (8 * i);
        return v;
    }
    std::uint64_t u64(const char* what) {
        auto b = bytes(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(b[i])) << (8 * i);
        return v;
    }
    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
    std::string str(const char* what) {
        const auto n = u32(what);
        return std::string(bytes(n, what));
    }
    bool done() const { return pos_ == in_.size(); }
    std::size_t remaining() const { return in_.size() - pos_; }
    std::size_t pos() const { return pos_; }

private:
    std::string_view in_;
    std::size_t pos_ = 0;
};

enum class Kind : std::uint8_t { State = 0, Momentum = 1 };

void write_record(Writer& w, Kind kind, const TensorRecord& r) {
    w.u8(static_cast<std::uint8_t>(kind));
    w.str(r.name);
    w.u32(static_cast<std::uint32_t>(r.shape.size()));
    for (int d : r.shape) w.u32(static_cast<std::uint32_t>(d));
    for (float v : r.values) w.f32(v);
}

std::pair<Kind, TensorRecord> read_record(Reader& r) {
    const auto kind = r.u8("tensor kind");
    if (kind > 1) throw CheckpointError("unknown tensor kind " + std::to_string(kind));
    TensorRecord rec;
    rec.name = r.str("tensor name");
    const auto rank = r.u32("tensor rank");
    if (rank > 8) throw CheckpointError("tensor " + rec.name + " has implausible rank " + std::to_string(rank));
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        rec.shape.push_back(static_cast<int>(r.u32("tensor shape")));
        n *= static_cast<std::size_t>(rec.shape.back());
        if (n > r.remaining()) r.need(n * 4, "tensor data");
    }
    r.need(n * 4, "tensor data");
    rec.values.resize(n);
    for (auto& v : rec.values) v = r.f32("tensor data");
    return {static_cast<Kind>(kind), std::move(rec)};
}

void check_magic(Reader& r, const char (&magic)[8], const char* what) {
    const auto m = r.bytes(8, "magic");
    if (std::memcmp(m.data(), magic, 8) != 0) throw CheckpointError(std::string("not a ") + what + " (bad magic)");
    const auto version = r.u32("version");
    if (version != kCheckpointVersion) {
        throw CheckpointVersionError(std::string(what) + " version " + std::to_string(version) +
                                     " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("cannot write " + path.string());
}

TensorRecord to_record(const std::string& name, const Tensor<float>& t) {
    return {name, t.shape(), t.storage()};
}

void check_match(const TensorRecord& rec, const StateEntry<float>& entry) {
    if (rec.name != entry.name) {
        throw CheckpointShapeError("checkpoint tensor " + rec.name + " found where model expects " + entry.name);
    }
    if (rec.shape != entry.value->shape()) {
        throw CheckpointShapeError("parameter " + entry.name + ": checkpoint shape " + shape_str(rec.shape) +
                                   " vs model shape " + shape_str(entry.value->shape()));
    }
}

void copy_into(const TensorRecord& rec, const StateEntry<float>& entry) {
    check_match(rec, entry);
    entry.value->storage() = rec.values;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
    Writer w;
    w.bytes(kCheckpointMagic, 8);
    w.u32(kCheckpointVersion);
    w.str(model_config_text(ckpt.model));
    w.u32(static_cast<std::uint32_t>(ckpt.epoch));
    w.f64(ckpt.best_val_loss);
    w.str(ckpt.rng_state);
    w.u32(static_cast<std::uint32_t>(ckpt.state.size() + ckpt.momentum.size()));
    for (const auto& r : ckpt.state) write_record(w, Kind::State, r);
    for (const auto& r : ckpt.momentum) write_record(w, Kind::Momentum, r);
    return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
    Reader r(bytes);
    check_magic(r, kCheckpointMagic, "checkpoint");
    Checkpoint ckpt;
    try {
        ckpt.model = parse_model_config(r.str("model config"));
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("invalid model config in checkpoint: ") + e.what());
    }
    ckpt.epoch = static_cast<std::int32_t>(r.u32("epoch"));
    ckpt.best_val_loss = r.f64("best validation loss");
    ckpt.rng_state = r.str("rng state");
    const auto count = r.u32("tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        auto [kind, rec] = read_record(r);
        (kind == Kind::State ? ckpt.state : ckpt.momentum).push_back(std::move(rec));
    }
    if (!r.done()) throw CheckpointError("unexpected trailing bytes after byte " + std::to_string(r.pos()));

    // Every stored shape must agree with the stored config.
    Dekan<float> probe(ckpt.model);
    restore_model(ckpt, probe);
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

Checkpoint capture_checkpoint(Dekan<float>& model, const Sgd<float>* optimizer, int epoch, double best_val_loss,
                              std::string rng_state) {
    Checkpoint c;
    c.model = model.config();
    for (const auto& e : model.state()) c.state.push_back(to_record(e.name, *e.value));
    if (optimizer) {
        for (std::size_t i = 0; i < optimizer->buffer_names().size(); ++i) {
            c.momentum.push_back(to_record(optimizer->buffer_names()[i], optimizer->buffers()[i]));
        }
    }
    c.epoch = epoch;
    c.best_val_loss = best_val_loss;
    c.rng_state = std::move(rng_state);
    return c;
}

void restore_model(const Checkpoint& ckpt, Dekan<float>& model) {
    const auto state = model.state();
    const std::size_t common = std::min(state.size(), ckpt.state.size());
    for (std::size_t i = 0; i < common; ++i) check_match(ckpt.state[i], state[i]);
    if (ckpt.state.size() < state.size()) {
        throw CheckpointShapeError("checkpoint lacks parameter " + state[common].name);
    }
    if (ckpt.state.size() > state.size()) {
        throw CheckpointShapeError("checkpoint has unexpected parameter " + ckpt.state[common].name);
    }
    for (std::size_t i = 0; i < state.size(); ++i) state[i].value->storage() = ckpt.state[i].values;
}

Dekan<float> model_from_checkpoint(const Checkpoint& ckpt) {
    Dekan<float> model(ckpt.model);
    restore_model(ckpt, model);
    return model;
}

std::string encode_param_table(const std::vector<TensorRecord>& records) {
    Writer w;
    w.bytes(kParamTableMagic, 8);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(records.size()));
    for (const auto& r : records) write_record(w, Kind::State, r);
    return w.take();
}

std::vector<TensorRecord> decode_param_table(std::string_view bytes) {
    Reader r(bytes);
    check_magic(r, kParamTableMagic, "parameter table");
    std::vector<TensorRecord> out;
    const auto count = r.u32("tensor count");
    for (std::uint32_t i = 0; i < count; ++i) out.push_back(read_record(r).second);
    if (!r.done()) throw CheckpointError("unexpected trailing bytes in parameter table");
    return out;
}

void import_residual_weights(const std::filesystem::path& path, Dekan<float>& model) {
    const auto records = decode_param_table(read_file(path));
    std::map<std::string, const TensorRecord*> by_name;
    for (const auto& r : records) by_name[r.name] = &r;
    StateList<float> state;
    model.res_encoder().collect(state, "");
    for (const auto& e : state) {
        const auto it = by_name.find(e.name);
        if (it == by_name.end()) throw CheckpointShapeError("imported weights lack " + e.name);
        copy_into(*it->second, e);
        by_name.erase(it);
    }
    if (!by_name.empty()) {
        throw CheckpointShapeError("imported weights contain unknown tensor " + by_name.begin()->first);
    }
}

}  // namespace dekan
