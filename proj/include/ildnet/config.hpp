#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ildnet/data.hpp"
#include "ildnet/model.hpp"
#include "ildnet/optim.hpp"

namespace ildnet {

// Flat key=value run configuration. The default table is the schema: a key
// absent from it is rejected, so typos fail loudly. Canonical text (sorted
// key=value lines) makes runs diffable; its hash ties checkpoints to the
// configuration that produced them.
class RunConfig {
public:
    static RunConfig defaults();

    // key=value lines, '#' comments, blank lines. Unknown or repeated keys
    // are errors.
    void load_file(const std::string& path);

    // Single "key=value" override, as given on the command line.
    void set_pair(const std::string& pair);
    void set(const std::string& key, const std::string& value);

    const std::string& get(const std::string& key) const;
    std::int64_t get_int(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    std::string canonical() const;
    std::string hash() const;  // 16 hex digits over canonical()

    // Typed views over the relevant key groups.
    TrainingConfig training() const;
    ArchitectureSpec architecture() const;
    std::vector<HUWindow> hu_windows() const;
    std::vector<TransformKind> transforms() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace ildnet
