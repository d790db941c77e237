#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gsgan/common.hpp"

namespace gsgan {

// Flat `key = value` run configuration. Every key has a documented default;
// unknown keys are rejected. Assigning `preset` immediately expands the
// preset's schedule keys, so later assignments can still override them.
class RunConfig {
public:
    RunConfig();

    void set(const std::string& key, const std::string& value);
    const std::string& get(const std::string& key) const;
    bool has(const std::string& key) const;

    std::int64_t get_int(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    // Parses `key = value` lines; '#' starts a comment; blank lines ignored.
    void parse_text(const std::string& text);
    void parse_file(const std::string& path);

    // Canonical emission: schema order, one documented key per line. Emission
    // of defaults, parsed back and emitted again, is byte-identical.
    std::string emit() const;

    static std::string emit_defaults();

    struct Entry {
        std::string key;
        std::string value;
        std::string doc;
    };
    const std::vector<Entry>& entries() const { return entries_; }

private:
    Entry* find(const std::string& key);
    const Entry* find(const std::string& key) const;
    void apply_preset(const std::string& name);

    std::vector<Entry> entries_;
};

}  // namespace gsgan
