#include "tcseg/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace tcseg {

namespace {

constexpr char kMagic[8] = {'T', 'C', 'S', 'G', 'C', 'K', 'P', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

void put_string(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
    std::uint32_t n = get_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                     const ModelParams& params, const ClassVocab& vocab) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
    os.write(kMagic, sizeof(kMagic));

    put_u32(os, static_cast<std::uint32_t>(cfg.num_layers));
    put_u32(os, static_cast<std::uint32_t>(cfg.channels));
    put_u32(os, static_cast<std::uint32_t>(cfg.kernel_size));
    put_u32(os, static_cast<std::uint32_t>(cfg.d_k));
    put_u32(os, static_cast<std::uint32_t>(cfg.num_classes));
    put_u32(os, static_cast<std::uint32_t>(cfg.input_dim));
    put_f64(os, cfg.dropout_rate);
    put_u32(os, cfg.pooling_enabled ? 1 : 0);
    put_string(os, to_string(cfg.variant));

    put_u32(os, static_cast<std::uint32_t>(vocab.size()));
    for (const std::string& n : vocab.names()) put_string(os, n);

    std::uint32_t count = 0;
    visit_params(params, [&](const std::string&, const SeqTensor&) { ++count; });
    put_u32(os, count);
    visit_params(params, [&](const std::string& name, const SeqTensor& t) {
        put_string(os, name);
        put_u32(os, static_cast<std::uint32_t>(t.rows()));
        put_u32(os, static_cast<std::uint32_t>(t.cols()));
        for (double v : t.data()) put_f64(os, v);
    });
    if (!os) throw std::runtime_error("short write to checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error(path.string() + " is not a checkpoint file");

    Checkpoint ck;
    ck.config.num_layers = static_cast<int>(get_u32(is));
    ck.config.channels = static_cast<int>(get_u32(is));
    ck.config.kernel_size = static_cast<int>(get_u32(is));
    ck.config.d_k = static_cast<int>(get_u32(is));
    ck.config.num_classes = static_cast<int>(get_u32(is));
    ck.config.input_dim = static_cast<int>(get_u32(is));
    ck.config.dropout_rate = get_f64(is);
    ck.config.pooling_enabled = get_u32(is) != 0;
    ck.config.variant = variant_from_string(get_string(is));

    std::vector<std::string> names(get_u32(is));
    for (std::string& n : names) n = get_string(is);
    ck.vocab = ClassVocab(std::move(names));

    // placeholder structure with the right stage sizes, then fill in order
    ck.params = init_params(ck.config, 0);
    const std::uint32_t count = get_u32(is);
    std::uint32_t expected = 0;
    visit_params(ck.params, [&](const std::string&, const SeqTensor&) { ++expected; });
    if (count != expected)
        throw std::runtime_error(path.string() + ": tensor count " + std::to_string(count) +
                                 ", expected " + std::to_string(expected));
    visit_params(ck.params, [&](const std::string& name, SeqTensor& t) {
        const std::string stored = get_string(is);
        if (stored != name)
            throw std::runtime_error(path.string() + ": tensor '" + stored + "', expected '" +
                                     name + "'");
        const int rows = static_cast<int>(get_u32(is));
        const int cols = static_cast<int>(get_u32(is));
        if (rows != t.rows() || cols != t.cols())
            throw std::runtime_error(path.string() + ": tensor '" + name + "' is " +
                                     std::to_string(rows) + "x" + std::to_string(cols) +
                                     ", expected " + t.shape_str());
        for (double& v : t.data()) v = get_f64(is);
    });
    if (!is) throw std::runtime_error("truncated checkpoint " + path.string());
    return ck;
}

void save_vocab(const std::filesystem::path& path, const ClassVocab& vocab) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write vocab " + path.string());
    for (const std::string& n : vocab.names()) os << n << '\n';
}

ClassVocab load_vocab(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open vocab " + path.string());
    std::vector<std::string> names;
    std::string line;
    while (std::getline(is, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (!line.empty()) names.push_back(line);
    }
    return ClassVocab(std::move(names));
}

}  // namespace tcseg
