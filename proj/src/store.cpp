#include "mosaic/store.hpp"

#include <sqlite3.h>

#include <cmath>

namespace mosaic::store {

namespace {

constexpr const char* kSchema = R"(
CREATE TABLE devices(
  device_id INTEGER PRIMARY KEY,
  width_px REAL NOT NULL,
  height_px REAL NOT NULL,
  width_mm REAL NOT NULL,
  height_mm REAL NOT NULL
);
CREATE TABLE resources(
  resource_id INTEGER PRIMARY KEY,
  text TEXT NOT NULL,
  timestamp INTEGER,
  host_device INTEGER REFERENCES devices(device_id),
  local_x_px REAL NOT NULL,
  local_y_px REAL NOT NULL
);
CREATE TABLE tags(
  resource_id INTEGER NOT NULL REFERENCES resources(resource_id) ON DELETE CASCADE,
  tag TEXT NOT NULL,
  UNIQUE(resource_id, tag)
);
CREATE TABLE relations(
  a INTEGER NOT NULL REFERENCES resources(resource_id) ON DELETE CASCADE,
  b INTEGER NOT NULL REFERENCES resources(resource_id) ON DELETE CASCADE,
  kind TEXT NOT NULL CHECK(kind IN ('reference', 'temporal')),
  CHECK(a <> b),
  CHECK(kind <> 'reference' OR a < b),
  UNIQUE(a, b, kind)
);
)";

const std::map<std::string, std::vector<std::string>> kColumns = {
    {"devices", {"device_id", "width_px", "height_px", "width_mm", "height_mm"}},
    {"resources", {"resource_id", "text", "timestamp", "host_device", "local_x_px", "local_y_px"}},
    {"tags", {"resource_id", "tag"}},
    {"relations", {"a", "b", "kind"}},
};

[[noreturn]] void fail(sqlite3* db, int rc, const std::string& what)
{
    const std::string msg = what + ": " + (db ? sqlite3_errmsg(db) : sqlite3_errstr(rc));
    if (rc == SQLITE_NOTADB || rc == SQLITE_CORRUPT) {
        throw StoreCorrupt(msg);
    }
    throw StoreError(msg);
}

class Statement {
public:
    Statement(sqlite3* db, const char* sql) : db_(db)
    {
        const int rc = sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr);
        if (rc != SQLITE_OK) {
            fail(db, rc, std::string("prepare ") + sql);
        }
    }
    ~Statement() { sqlite3_finalize(stmt_); }
    Statement(const Statement&) = delete;
    Statement& operator=(const Statement&) = delete;

    Statement& bind(int i, std::int64_t v)
    {
        sqlite3_bind_int64(stmt_, i, v);
        return *this;
    }
    Statement& bind(int i, double v)
    {
        sqlite3_bind_double(stmt_, i, v);
        return *this;
    }
    Statement& bind(int i, const std::string& v)
    {
        sqlite3_bind_text(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
        return *this;
    }
    template <class T>
    Statement& bind(int i, const std::optional<T>& v)
    {
        if (v) {
            return bind(i, *v);
        }
        sqlite3_bind_null(stmt_, i);
        return *this;
    }

    /// true while a row is available.
    bool step()
    {
        const int rc = sqlite3_step(stmt_);
        if (rc == SQLITE_ROW) {
            return true;
        }
        if (rc == SQLITE_DONE) {
            return false;
        }
        fail(db_, rc, "step");
    }
    void run()
    {
        step();
        sqlite3_reset(stmt_);
        sqlite3_clear_bindings(stmt_);
    }

    std::int64_t i64(int col) const { return sqlite3_column_int64(stmt_, col); }
    double real(int col) const { return sqlite3_column_double(stmt_, col); }
    bool null(int col) const { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }
    std::string text(int col) const
    {
        const auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt_, col));
        return p ? std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col))) : std::string();
    }
    std::optional<std::int64_t> opt_i64(int col) const
    {
        return null(col) ? std::nullopt : std::optional<std::int64_t>(i64(col));
    }

private:
    sqlite3* db_;
    sqlite3_stmt* stmt_ = nullptr;
};

class Transaction {
public:
    explicit Transaction(sqlite3* db) : db_(db) { exec("BEGIN IMMEDIATE"); }
    ~Transaction()
    {
        if (!done_) {
            sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
        }
    }
    void commit()
    {
        exec("COMMIT");
        done_ = true;
    }

private:
    void exec(const char* sql)
    {
        const int rc = sqlite3_exec(db_, sql, nullptr, nullptr, nullptr);
        if (rc != SQLITE_OK) {
            fail(db_, rc, sql);
        }
    }
    sqlite3* db_;
    bool done_ = false;
};

const nlohmann::json& required(const nlohmann::json& obj, const char* key, const std::string& where)
{
    const auto it = obj.find(key);
    if (it == obj.end()) {
        throw std::invalid_argument(where + ": missing '" + key + "'");
    }
    return *it;
}

std::int64_t id_field(const nlohmann::json& obj, const char* key, const std::string& where)
{
    const auto& v = required(obj, key, where);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        throw std::invalid_argument(where + ": '" + key + "' must be a non-negative integer");
    }
    return v.get<std::int64_t>();
}

double number_field(const nlohmann::json& obj, const char* key, const std::string& where)
{
    const auto& v = required(obj, key, where);
    if (!v.is_number() || !std::isfinite(v.get<double>())) {
        throw std::invalid_argument(where + ": '" + key + "' must be a finite number");
    }
    return v.get<double>();
}

}  // namespace

// Seed fixture ------------------------------------------------------------------

Contents contents_from_seed(const nlohmann::json& j)
{
    if (!j.is_object()) {
        throw std::invalid_argument("seed must be a JSON object");
    }
    Contents c;
    if (j.contains("devices")) {
        for (const auto& d : j["devices"]) {
            const std::string where = "seed device";
            const DeviceId id = id_field(d, "device_id", where);
            ScreenSpec s{number_field(d, "width_px", where), number_field(d, "height_px", where),
                         number_field(d, "width_mm", where), number_field(d, "height_mm", where)};
            if (!s.valid()) {
                throw std::invalid_argument("seed device " + std::to_string(id) + ": screen sizes must be positive");
            }
            c.devices[id] = s;
        }
    }
    const auto& resources = required(j, "resources", "seed");
    if (!resources.is_array()) {
        throw std::invalid_argument("seed: 'resources' must be an array");
    }
    std::map<std::string, std::vector<ResourceId>> by_tag;
    for (const auto& r : resources) {
        Resource res;
        res.resource_id = id_field(r, "resource_id", "seed resource");
        const std::string where = "seed resource " + std::to_string(res.resource_id);
        if (c.resources.contains(res.resource_id)) {
            throw std::invalid_argument(where + ": duplicate id");
        }
        const auto& text = required(r, "text", where);
        if (!text.is_string()) {
            throw std::invalid_argument(where + ": 'text' must be a string");
        }
        res.text = text.get<std::string>();
        if (r.contains("tags")) {
            for (const auto& t : r["tags"]) {
                if (!t.is_string()) {
                    throw std::invalid_argument(where + ": tags must be strings");
                }
                res.tags.insert(t.get<std::string>());
            }
        }
        if (r.contains("timestamp") && !r["timestamp"].is_null()) {
            if (!r["timestamp"].is_number_integer()) {
                throw std::invalid_argument(where + ": 'timestamp' must be an integer");
            }
            res.timestamp = r["timestamp"].get<std::int64_t>();
        }
        if (r.contains("host_device") && !r["host_device"].is_null()) {
            res.host_device = id_field(r, "host_device", where);
            res.local_pos = {number_field(r, "x_px", where), number_field(r, "y_px", where)};
        }
        for (const auto& t : res.tags) {
            by_tag[t].push_back(res.resource_id);
        }
        c.resources[res.resource_id] = std::move(res);
    }
    for (const auto& [tag, ids] : by_tag) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
            for (std::size_t k = i + 1; k < ids.size(); ++k) {
                c.relations.insert(Relation::make(ids[i], ids[k], RelationKind::reference));
            }
        }
    }
    if (j.contains("relations")) {
        for (const auto& rel : j["relations"]) {
            const ResourceId a = id_field(rel, "a", "seed relation");
            const ResourceId b = id_field(rel, "b", "seed relation");
            const RelationKind kind =
                relation_kind_from_string(rel.contains("kind") ? rel["kind"].get<std::string>() : "reference");
            if (!c.resources.contains(a) || !c.resources.contains(b)) {
                throw std::invalid_argument("seed relation refers to an unknown resource");
            }
            c.relations.insert(Relation::make(a, b, kind));
        }
    }
    return c;
}

// Store ---------------------------------------------------------------------------

std::unique_ptr<Store> Store::open(const std::filesystem::path& path)
{
    sqlite3* db = nullptr;
    const int rc = sqlite3_open_v2(path.c_str(), &db, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                                   nullptr);
    if (rc != SQLITE_OK) {
        const std::string msg = "open " + path.string() + ": " + (db ? sqlite3_errmsg(db) : sqlite3_errstr(rc));
        sqlite3_close(db);
        throw StoreError(msg);
    }
    std::unique_ptr<Store> s(new Store(db));
    sqlite3_busy_timeout(db, 2000);
    {
        Statement check(db, "PRAGMA integrity_check");
        while (check.step()) {
            if (check.text(0) != "ok") {
                throw StoreCorrupt("integrity check failed for " + path.string() + ": " + check.text(0));
            }
        }
    }
    s->exec("PRAGMA foreign_keys = ON");
    s->check_schema();
    {
        Statement fk(db, "PRAGMA foreign_key_check");
        if (fk.step()) {
            throw StoreCorrupt("foreign key violations in " + path.string() + " (table " + fk.text(0) + ")");
        }
    }
    return s;
}

Store::~Store()
{
    try {
        stop_flusher();
    } catch (const StoreError&) {
    }
    sqlite3_close(db_);
}

void Store::exec(const char* sql)
{
    char* err = nullptr;
    const int rc = sqlite3_exec(db_, sql, nullptr, nullptr, &err);
    if (rc != SQLITE_OK) {
        const std::string msg = err ? err : sqlite3_errstr(rc);
        sqlite3_free(err);
        if (rc == SQLITE_NOTADB || rc == SQLITE_CORRUPT) {
            throw StoreCorrupt(msg);
        }
        throw StoreError(msg);
    }
}

void Store::check_schema()
{
    std::set<std::string> tables;
    {
        Statement q(db_, "SELECT name FROM sqlite_master WHERE type = 'table'");
        while (q.step()) {
            tables.insert(q.text(0));
        }
    }
    if (tables.empty()) {
        Transaction tx(db_);
        exec(kSchema);
        tx.commit();
        return;
    }
    for (const auto& [table, columns] : kColumns) {
        if (!tables.contains(table)) {
            throw SchemaMismatch("missing table '" + table + "'; refusing to migrate");
        }
        std::set<std::string> have;
        Statement info(db_, ("PRAGMA table_info(" + table + ")").c_str());
        while (info.step()) {
            have.insert(info.text(1));
        }
        for (const auto& c : columns) {
            if (!have.contains(c)) {
                throw SchemaMismatch("table '" + table + "' lacks column '" + c + "'; refusing to migrate");
            }
        }
    }
}

Contents Store::load()
{
    std::lock_guard lock(db_mutex_);
    Contents c;
    {
        Statement q(db_, "SELECT device_id, width_px, height_px, width_mm, height_mm FROM devices");
        while (q.step()) {
            c.devices[q.i64(0)] = ScreenSpec{q.real(1), q.real(2), q.real(3), q.real(4)};
        }
    }
    {
        Statement q(db_, "SELECT resource_id, text, timestamp, host_device, local_x_px, local_y_px FROM resources");
        while (q.step()) {
            Resource r;
            r.resource_id = q.i64(0);
            r.text = q.text(1);
            r.timestamp = q.opt_i64(2);
            r.host_device = q.opt_i64(3);
            r.local_pos = {q.real(4), q.real(5)};
            c.resources[r.resource_id] = std::move(r);
        }
    }
    {
        Statement q(db_, "SELECT resource_id, tag FROM tags");
        while (q.step()) {
            const auto it = c.resources.find(q.i64(0));
            if (it == c.resources.end()) {
                throw StoreCorrupt("tag for unknown resource " + std::to_string(q.i64(0)));
            }
            it->second.tags.insert(q.text(1));
        }
    }
    {
        Statement q(db_, "SELECT a, b, kind FROM relations");
        while (q.step()) {
            try {
                c.relations.insert(Relation::make(q.i64(0), q.i64(1), relation_kind_from_string(q.text(2))));
            } catch (const std::invalid_argument& e) {
                throw StoreCorrupt(std::string("bad relation row: ") + e.what());
            }
        }
    }
    return c;
}

void Store::upsert_devices(const std::map<DeviceId, ScreenSpec>& devices)
{
    std::lock_guard lock(db_mutex_);
    Transaction tx(db_);
    Statement up(db_,
                 "INSERT INTO devices(device_id, width_px, height_px, width_mm, height_mm) VALUES(?, ?, ?, ?, ?) "
                 "ON CONFLICT(device_id) DO UPDATE SET width_px = excluded.width_px, height_px = excluded.height_px, "
                 "width_mm = excluded.width_mm, height_mm = excluded.height_mm");
    for (const auto& [id, s] : devices) {
        up.bind(1, std::int64_t{id}).bind(2, s.width_px).bind(3, s.height_px).bind(4, s.width_mm).bind(5, s.height_mm);
        up.run();
    }
    tx.commit();
}

void Store::replace_content(const Contents& contents)
{
    std::lock_guard lock(db_mutex_);
    Transaction tx(db_);
    exec("DELETE FROM relations; DELETE FROM tags; DELETE FROM resources;");
    {
        Statement ins(db_,
                      "INSERT INTO resources(resource_id, text, timestamp, host_device, local_x_px, local_y_px) "
                      "VALUES(?, ?, ?, ?, ?, ?)");
        Statement tag(db_, "INSERT INTO tags(resource_id, tag) VALUES(?, ?)");
        for (const auto& [id, r] : contents.resources) {
            ins.bind(1, std::int64_t{id}).bind(2, r.text).bind(3, r.timestamp).bind(4, r.host_device);
            ins.bind(5, r.local_pos.x).bind(6, r.local_pos.y);
            ins.run();
            for (const auto& t : r.tags) {
                tag.bind(1, std::int64_t{id}).bind(2, t);
                tag.run();
            }
        }
    }
    {
        Statement rel(db_, "INSERT OR IGNORE INTO relations(a, b, kind) VALUES(?, ?, ?)");
        for (const auto& r : contents.relations) {
            const Relation n = Relation::make(r.a, r.b, r.kind);
            rel.bind(1, std::int64_t{n.a}).bind(2, std::int64_t{n.b}).bind(3, std::string(to_string(n.kind)));
            rel.run();
        }
    }
    tx.commit();
}

void Store::persist_placement(const Placement& p)
{
    std::lock_guard lock(pending_mutex_);
    pending_[p.resource_id] = p;
}

std::size_t Store::pending() const
{
    std::lock_guard lock(pending_mutex_);
    return pending_.size();
}

std::uint64_t Store::flushes() const
{
    std::lock_guard lock(pending_mutex_);
    return flushes_;
}

void Store::flush()
{
    std::map<ResourceId, Placement> batch;
    {
        std::lock_guard lock(pending_mutex_);
        batch.swap(pending_);
    }
    if (batch.empty()) {
        return;
    }
    try {
        write_placements(batch);
    } catch (...) {
        // Keep what failed unless a newer value has arrived meanwhile.
        std::lock_guard lock(pending_mutex_);
        for (auto& [id, p] : batch) {
            pending_.try_emplace(id, p);
        }
        throw;
    }
    std::lock_guard lock(pending_mutex_);
    ++flushes_;
}

void Store::write_placements(const std::map<ResourceId, Placement>& batch)
{
    std::lock_guard lock(db_mutex_);
    Transaction tx(db_);
    Statement up(db_, "UPDATE resources SET host_device = ?, local_x_px = ?, local_y_px = ? WHERE resource_id = ?");
    for (const auto& [id, p] : batch) {
        up.bind(1, p.host_device).bind(2, p.local_pos.x).bind(3, p.local_pos.y).bind(4, std::int64_t{id});
        up.run();
    }
    tx.commit();
}

void Store::start_flusher(std::chrono::milliseconds interval)
{
    {
        std::lock_guard lock(pending_mutex_);
        stopping_ = false;
    }
    flusher_ = std::thread([this, interval] {
        std::unique_lock lock(pending_mutex_);
        while (!stopping_) {
            wake_.wait_for(lock, interval, [&] { return stopping_; });
            lock.unlock();
            try {
                flush();
            } catch (const StoreError&) {
                // retried next interval
            }
            lock.lock();
        }
    });
}

void Store::stop_flusher()
{
    {
        std::lock_guard lock(pending_mutex_);
        stopping_ = true;
    }
    wake_.notify_all();
    if (flusher_.joinable()) {
        flusher_.join();
    }
    flush();
}

}  // namespace mosaic::store
