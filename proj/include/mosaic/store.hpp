#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mosaic/model.hpp"

struct sqlite3;

namespace mosaic::store {

class StoreError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The file is not a database, or fails its integrity check.
class StoreCorrupt : public StoreError {
public:
    using StoreError::StoreError;
};

/// The file is a database but not one with our tables. Never migrated.
class SchemaMismatch : public StoreError {
public:
    using StoreError::StoreError;
};

struct DeviceRecord {
    DeviceId device_id = 0;
    ScreenSpec screen;
    friend bool operator==(const DeviceRecord&, const DeviceRecord&) = default;
};

struct Contents {
    std::map<ResourceId, Resource> resources;
    std::set<Relation> relations;
    std::map<DeviceId, ScreenSpec> devices;
    friend bool operator==(const Contents&, const Contents&) = default;
};

struct Placement {
    ResourceId resource_id = 0;
    std::optional<DeviceId> host_device;
    Vec2 local_pos;
    friend bool operator==(const Placement&, const Placement&) = default;
};

/// Reads a resource fixture: {"devices": [...]?, "resources": [...], "relations": [...]?}.
/// Resources sharing a tag are related by reference. Throws std::invalid_argument.
Contents contents_from_seed(const nlohmann::json& j);

/// Single-file SQLite store. Placements are written behind: persist_placement
/// only records the latest value, and a flusher thread commits pending values
/// at a fixed interval.
class Store {
public:
    /// Opens or creates the database. A new or empty file gets the schema.
    static std::unique_ptr<Store> open(const std::filesystem::path& path);

    ~Store();
    Store(const Store&) = delete;
    Store& operator=(const Store&) = delete;

    Contents load();

    /// Registers devices (insert or update screen geometry).
    void upsert_devices(const std::map<DeviceId, ScreenSpec>& devices);

    /// Replaces all resources, tags and relations in one transaction.
    void replace_content(const Contents& contents);

    void persist_placement(const Placement& p);

    /// Commits every pending placement now.
    void flush();

    void start_flusher(std::chrono::milliseconds interval = std::chrono::milliseconds(200));
    /// Stops the flusher and commits what is pending.
    void stop_flusher();

    std::size_t pending() const;
    std::uint64_t flushes() const;

private:
    explicit Store(sqlite3* db) : db_(db) {}

    void exec(const char* sql);
    void check_schema();
    void write_placements(const std::map<ResourceId, Placement>& batch);

    sqlite3* db_ = nullptr;
    std::mutex db_mutex_;

    mutable std::mutex pending_mutex_;
    std::condition_variable wake_;
    std::map<ResourceId, Placement> pending_;
    bool stopping_ = false;
    std::uint64_t flushes_ = 0;
    std::thread flusher_;
};

}  // namespace mosaic::store
