#include "crtlab/checkpoint.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace crtlab::ckpt {

namespace {

constexpr char kMagic[8] = {'C', 'R', 'T', 'C', 'K', 'P', 'T', '1'};
constexpr char kOptMagic[4] = {'O', 'P', 'T', 'S'};
constexpr uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::istream& is) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw ValidationError("checkpoint: truncated file");
    return v;
}

void put_string(std::ostream& os, const std::string& s) {
    put<uint32_t>(os, (uint32_t)s.size());
    os.write(s.data(), (std::streamsize)s.size());
}

std::string take_string(std::istream& is) {
    const uint32_t n = take<uint32_t>(is);
    if (n > (1u << 20)) throw ValidationError("checkpoint: implausible string length");
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw ValidationError("checkpoint: truncated string");
    return s;
}

void put_floats(std::ostream& os, const std::vector<float>& v) {
    os.write(reinterpret_cast<const char*>(v.data()), (std::streamsize)(v.size() * sizeof(float)));
}

void take_floats(std::istream& is, std::vector<float>& v) {
    is.read(reinterpret_cast<char*>(v.data()), (std::streamsize)(v.size() * sizeof(float)));
    if (!is) throw ValidationError("checkpoint: truncated values");
}

}  // namespace

void save(const std::string& path, const opt::ParamStore& store, const std::string& meta) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw RuntimeFailure("checkpoint: cannot open " + tmp.string());
        os.write(kMagic, sizeof(kMagic));
        put<uint32_t>(os, kVersion);
        put_string(os, meta);
        put<uint32_t>(os, (uint32_t)store.items().size());
        for (const auto& p : store.items()) {
            put_string(os, p->name);
            put<uint32_t>(os, (uint32_t)p->shape.size());
            for (int d : p->shape) put<int32_t>(os, d);
            put_floats(os, p->w);
        }
        os.write(kOptMagic, sizeof(kOptMagic));
        put<uint32_t>(os, (uint32_t)store.items().size());
        for (const auto& p : store.items()) {
            put_string(os, p->name);
            put<uint64_t>(os, (uint64_t)p->step);
            put_floats(os, p->m);
            put_floats(os, p->v);
        }
        if (!os) throw RuntimeFailure("checkpoint: write failed on " + tmp.string());
    }
    fs::rename(tmp, target);
}

std::string load(const std::string& path, opt::ParamStore& store) {
    if (store.size() != 0) throw Error("checkpoint: load requires an empty store");
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw ValidationError("checkpoint: bad magic in " + path);
    const uint32_t version = take<uint32_t>(is);
    if (version != kVersion) throw ValidationError("checkpoint: unsupported version");
    const std::string meta = take_string(is);
    const uint32_t n = take<uint32_t>(is);
    for (uint32_t i = 0; i < n; ++i) {
        const std::string name = take_string(is);
        const uint32_t ndim = take<uint32_t>(is);
        Shape shape(ndim);
        for (uint32_t j = 0; j < ndim; ++j) shape[j] = take<int32_t>(is);
        auto& p = store.create(name, shape, nullptr);
        take_floats(is, p.w);
    }
    char om[4];
    is.read(om, sizeof(om));
    if (!is || std::memcmp(om, kOptMagic, sizeof(kOptMagic)) != 0)
        throw ValidationError("checkpoint: missing optimizer manifest");
    const uint32_t on = take<uint32_t>(is);
    for (uint32_t i = 0; i < on; ++i) {
        const std::string name = take_string(is);
        auto& p = store.get(name);
        p.step = (int64_t)take<uint64_t>(is);
        take_floats(is, p.m);
        take_floats(is, p.v);
    }
    return meta;
}

}  // namespace crtlab::ckpt
