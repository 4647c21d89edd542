#include "mosaic/model.hpp"

#include <algorithm>
#include <limits>

#include "mosaic/json_codec.hpp"

namespace mosaic {

using ojson = nlohmann::ordered_json;

std::string_view to_string(RelationKind kind)
{
    return kind == RelationKind::reference ? "reference" : "temporal";
}

RelationKind relation_kind_from_string(std::string_view s)
{
    if (s == "reference") {
        return RelationKind::reference;
    }
    if (s == "temporal") {
        return RelationKind::temporal;
    }
    throw std::invalid_argument("unknown relation kind '" + std::string(s) + "'");
}

Relation Relation::make(ResourceId a, ResourceId b, RelationKind kind)
{
    if (a == b) {
        throw std::invalid_argument("a relation needs two distinct resources");
    }
    if (kind == RelationKind::reference && b < a) {
        std::swap(a, b);
    }
    return {a, b, kind};
}

std::string_view to_string(ModelErrorCode code)
{
    switch (code) {
    case ModelErrorCode::UnknownResource: return "UnknownResource";
    case ModelErrorCode::UnknownDevice: return "UnknownDevice";
    case ModelErrorCode::WrongHost: return "WrongHost";
    case ModelErrorCode::NoTemporalData: return "NoTemporalData";
    case ModelErrorCode::BelowThreshold: return "BelowThreshold";
    case ModelErrorCode::InvalidInput: return "InvalidInput";
    }
    return "?";
}

InteractionModel::InteractionModel(ModelConfig config) : config_(config) {}

void InteractionModel::add_device(DeviceId id, const ScreenSpec& screen)
{
    if (!screen.valid()) {
        throw ModelError(ModelErrorCode::InvalidInput, "screen dimensions must be positive");
    }
    state_.screens[id] = screen;
    for (const auto& [rid, r] : state_.resources) {
        if (r.host_device == id) {
            recompute_global(rid);
        }
    }
}

void InteractionModel::add_resource(Resource resource)
{
    if (resource.host_device) {
        const auto screen = state_.screens.find(*resource.host_device);
        if (screen == state_.screens.end()) {
            throw ModelError(ModelErrorCode::UnknownDevice,
                             "resource " + std::to_string(resource.resource_id) + " hosted on unknown device");
        }
        if (!screen->second.contains(resource.local_pos)) {
            throw ModelError(ModelErrorCode::InvalidInput,
                             "resource " + std::to_string(resource.resource_id) + " lies outside its host screen");
        }
    }
    const ResourceId id = resource.resource_id;
    state_.resources[id] = std::move(resource);
    recompute_global(id);
}

void InteractionModel::add_relation(const Relation& relation)
{
    if (!state_.resources.contains(relation.a) || !state_.resources.contains(relation.b)) {
        throw ModelError(ModelErrorCode::UnknownResource, "relation refers to an unknown resource");
    }
    state_.relations.insert(Relation::make(relation.a, relation.b, relation.kind));
}

const Resource& InteractionModel::resource_or_throw(ResourceId id) const
{
    const auto it = state_.resources.find(id);
    if (it == state_.resources.end()) {
        throw ModelError(ModelErrorCode::UnknownResource, "unknown resource " + std::to_string(id));
    }
    return it->second;
}

void InteractionModel::require_host(const Resource& r, DeviceId device) const
{
    if (r.host_device != device) {
        throw ModelError(ModelErrorCode::WrongHost, "resource " + std::to_string(r.resource_id) +
                                                        " is not shown on device " + std::to_string(device));
    }
}

std::optional<Transform> InteractionModel::transform_of(DeviceId device) const
{
    const auto it = state_.poses.find(device);
    if (it == state_.poses.end()) {
        return std::nullopt;
    }
    return pose_to_transform(it->second);
}

void InteractionModel::recompute_global(ResourceId id)
{
    const Resource& r = state_.resources.at(id);
    std::optional<Transform> t;
    if (r.host_device && state_.screens.contains(*r.host_device)) {
        t = transform_of(*r.host_device);
    }
    if (!t) {
        state_.global_pos.erase(id);
        return;
    }
    state_.global_pos[id] = local_to_global(*t, px_to_local_mm(state_.screens.at(*r.host_device), r.local_pos));
}

void InteractionModel::recompute_all_globals()
{
    for (const auto& [id, r] : state_.resources) {
        recompute_global(id);
    }
}

std::set<ResourceId> InteractionModel::related_set(ResourceId resource) const
{
    resource_or_throw(resource);
    std::set<ResourceId> out;
    for (const Relation& rel : state_.relations) {
        if (rel.kind != RelationKind::reference) {
            continue;
        }
        if (rel.a == resource) {
            out.insert(rel.b);
        } else if (rel.b == resource) {
            out.insert(rel.a);
        }
    }
    return out;
}

std::vector<ResourceId> InteractionModel::timeline_order() const
{
    std::vector<std::pair<std::int64_t, ResourceId>> keyed;
    for (const auto& [id, r] : state_.resources) {
        if (r.host_device && r.timestamp) {
            keyed.emplace_back(*r.timestamp, id);
        }
    }
    std::sort(keyed.begin(), keyed.end());
    std::vector<ResourceId> out;
    out.reserve(keyed.size());
    for (const auto& [t, id] : keyed) {
        out.push_back(id);
    }
    return out;
}

// Highlights ------------------------------------------------------------------

std::map<ResourceId, DeviceId> InteractionModel::desired_highlights() const
{
    std::map<ResourceId, DeviceId> out;
    if (!state_.highlight_active) {
        return out;
    }
    std::set<ResourceId> group = related_set(*state_.highlight_active);
    group.insert(*state_.highlight_active);
    for (ResourceId id : group) {
        const Resource& r = state_.resources.at(id);
        if (r.host_device) {
            out[id] = *r.host_device;
        }
    }
    return out;
}

void InteractionModel::refresh_highlights(CommandBatch& out)
{
    const auto desired = desired_highlights();
    auto& rendered = state_.rendered_highlights;
    for (auto it = rendered.begin(); it != rendered.end();) {
        const auto want = desired.find(it->first);
        if (want == desired.end() || want->second != it->second) {
            out.push_back({it->second, cmd::Highlight{it->first, false}});
            it = rendered.erase(it);
        } else {
            ++it;
        }
    }
    for (const auto& [id, device] : desired) {
        if (rendered.emplace(id, device).second) {
            out.push_back({device, cmd::Highlight{id, true}});
        }
    }
}

void InteractionModel::clear_highlights(CommandBatch& out)
{
    for (const auto& [id, device] : state_.rendered_highlights) {
        out.push_back({device, cmd::Highlight{id, false}});
    }
    state_.rendered_highlights.clear();
}

// Timeline --------------------------------------------------------------------

std::map<LineKey, RenderedLine> InteractionModel::desired_lines() const
{
    std::map<LineKey, RenderedLine> out;
    if (!state_.timeline_active) {
        return out;
    }
    const auto order = timeline_order();
    for (std::size_t i = 1; i < order.size(); ++i) {
        const Resource& a = state_.resources.at(order[i - 1]);
        const Resource& b = state_.resources.at(order[i]);
        const DeviceId host_a = *a.host_device;
        const DeviceId host_b = *b.host_device;
        if (host_a == host_b) {
            out[{a.resource_id, b.resource_id, LineKey::Part::local}] = {host_a, a.resource_id, std::nullopt};
            continue;
        }
        const auto ga = state_.global_pos.find(a.resource_id);
        const auto gb = state_.global_pos.find(b.resource_id);
        const auto ta = transform_of(host_a);
        const auto tb = transform_of(host_b);
        if (ga == state_.global_pos.end() || gb == state_.global_pos.end() || !ta || !tb) {
            continue;  // an endpoint's device has not been tracked yet
        }
        const Vec2 on_a = local_mm_to_px(state_.screens.at(host_a), project_to_device(*ta, gb->second));
        const Vec2 on_b = local_mm_to_px(state_.screens.at(host_b), project_to_device(*tb, ga->second));
        out[{a.resource_id, b.resource_id, LineKey::Part::from_side}] = {host_a, a.resource_id, on_a};
        out[{a.resource_id, b.resource_id, LineKey::Part::to_side}] = {host_b, b.resource_id, on_b};
    }
    return out;
}

namespace {

ServerCommand line_command(const LineKey& key, const RenderedLine& line, bool on)
{
    if (!line.point) {
        return cmd::LineLocal{key.from, key.to, on};
    }
    return cmd::LineToPoint{line.anchor, line.point->x, line.point->y, on};
}

}  // namespace

void InteractionModel::refresh_lines(CommandBatch& out)
{
    const auto desired = desired_lines();
    auto& rendered = state_.rendered_lines;

    for (auto it = rendered.begin(); it != rendered.end();) {
        const auto want = desired.find(it->first);
        bool keep = want != desired.end() && want->second.device_id == it->second.device_id &&
                    want->second.anchor == it->second.anchor &&
                    want->second.point.has_value() == it->second.point.has_value();
        if (keep && it->second.point) {
            keep = (*want->second.point - *it->second.point).norm() <= config_.line_damping_px;
        }
        if (!keep) {
            out.push_back({it->second.device_id, line_command(it->first, it->second, false)});
            it = rendered.erase(it);
        } else {
            ++it;
        }
    }
    for (const auto& [key, line] : desired) {
        if (rendered.emplace(key, line).second) {
            out.push_back({line.device_id, line_command(key, line, true)});
        }
    }
}

void InteractionModel::clear_lines(CommandBatch& out)
{
    for (const auto& [key, line] : state_.rendered_lines) {
        out.push_back({line.device_id, line_command(key, line, false)});
    }
    state_.rendered_lines.clear();
}

void InteractionModel::forget_rendered(ResourceId resource, DeviceId device)
{
    const auto h = state_.rendered_highlights.find(resource);
    if (h != state_.rendered_highlights.end() && h->second == device) {
        state_.rendered_highlights.erase(h);
    }
    std::erase_if(state_.rendered_lines, [&](const auto& entry) {
        const auto& [key, line] = entry;
        if (line.device_id != device) {
            return false;
        }
        if (line.point) {
            return line.anchor == resource;
        }
        return key.from == resource || key.to == resource;
    });
}

// Inputs ----------------------------------------------------------------------

CommandBatch InteractionModel::on_moved(DeviceId device, ResourceId resource, Vec2 p)
{
    const Resource& r = resource_or_throw(resource);
    require_host(r, device);
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
        throw ModelError(ModelErrorCode::InvalidInput, "position must be finite");
    }
    const ScreenSpec& screen = state_.screens.at(device);
    const Vec2 clamped{std::clamp(p.x, 0.0, screen.width_px), std::clamp(p.y, 0.0, screen.height_px)};

    CommandBatch out;
    state_.resources.at(resource).local_pos = clamped;
    if (clamped != p) {
        out.push_back({device, cmd::Show{resource, clamped.x, clamped.y}});
    }
    recompute_global(resource);
    refresh_lines(out);
    return out;
}

CommandBatch InteractionModel::on_clicked(DeviceId device, ResourceId resource)
{
    const Resource& r = resource_or_throw(resource);
    require_host(r, device);

    CommandBatch out;
    if (state_.highlight_active == resource) {
        state_.highlight_active.reset();
        clear_highlights(out);
        return out;
    }
    clear_highlights(out);
    state_.highlight_active = resource;
    refresh_highlights(out);
    return out;
}

CommandBatch InteractionModel::on_long_clicked(DeviceId device, ResourceId resource)
{
    const Resource& r = resource_or_throw(resource);
    require_host(r, device);
    if (!r.timestamp) {
        throw ModelError(ModelErrorCode::NoTemporalData,
                         "resource " + std::to_string(resource) + " carries no timestamp");
    }

    CommandBatch out;
    if (state_.timeline_active) {
        state_.timeline_active = false;
        clear_lines(out);
    } else {
        state_.timeline_active = true;
        refresh_lines(out);
    }
    return out;
}

CommandBatch InteractionModel::on_thrown(DeviceId device, ResourceId resource, Vec2 v_px_s)
{
    const Resource& r = resource_or_throw(resource);
    require_host(r, device);
    if (!std::isfinite(v_px_s.x) || !std::isfinite(v_px_s.y)) {
        throw ModelError(ModelErrorCode::InvalidInput, "velocity must be finite");
    }
    if (v_px_s.norm() < config_.throw_threshold_px_s) {
        throw ModelError(ModelErrorCode::BelowThreshold, "throw velocity below threshold");
    }

    CommandBatch out;
    const auto source_pose = state_.poses.find(device);
    std::optional<DeviceId> target;
    double theta = 0.0;
    if (source_pose != state_.poses.end() && state_.global_pos.contains(resource)) {
        theta = throw_direction(source_pose->second, v_px_s, state_.screens.at(device));
        std::vector<DevicePose> others;
        for (const auto& [id, pose] : state_.poses) {
            if (id != device) {
                others.push_back(pose);
            }
        }
        target = select_throw_target(source_pose->second, others, theta);
    }

    if (!target) {
        out.push_back({device, cmd::Show{resource, r.local_pos.x, r.local_pos.y}});
        return out;
    }

    const Vec2 landing = landing_position(r, *target, theta);
    out.push_back({device, cmd::Hide{resource}});
    forget_rendered(resource, device);

    Resource& moved = state_.resources.at(resource);
    moved.host_device = *target;
    moved.local_pos = landing;
    recompute_global(resource);

    out.push_back({*target, cmd::ResourceDef{resource, moved.text, moved.timestamp.has_value()}});
    out.push_back({*target, cmd::Show{resource, landing.x, landing.y}});
    refresh_highlights(out);
    refresh_lines(out);
    return out;
}

Vec2 InteractionModel::landing_position(const Resource& r, DeviceId target, double theta) const
{
    const ScreenSpec& screen = state_.screens.at(target);
    const Transform t = *transform_of(target);
    const Vec3 origin = global_to_local(t, state_.global_pos.at(r.resource_id));
    const Vec3 dir = t.rotation.apply_transposed({std::cos(theta), std::sin(theta), 0.0});

    const double half[2] = {screen.width_mm / 2.0, screen.height_mm / 2.0};
    const double o[2] = {origin.x, origin.y};
    const double d[2] = {dir.x, dir.y};
    double t_enter = 0.0;
    double t_exit = std::numeric_limits<double>::infinity();
    bool hit = true;
    for (int axis = 0; axis < 2 && hit; ++axis) {
        if (d[axis] == 0.0) {
            hit = o[axis] >= -half[axis] && o[axis] <= half[axis];
            continue;
        }
        double t1 = (-half[axis] - o[axis]) / d[axis];
        double t2 = (half[axis] - o[axis]) / d[axis];
        if (t1 > t2) {
            std::swap(t1, t2);
        }
        t_enter = std::max(t_enter, t1);
        t_exit = std::min(t_exit, t2);
        hit = t_enter <= t_exit;
    }

    Vec2 px{screen.width_px / 2.0, screen.height_px / 2.0};
    if (hit) {
        px = local_mm_to_px(screen, {o[0] + t_enter * d[0], o[1] + t_enter * d[1], 0.0});
    }
    const auto pull_in = [&](double v, double extent) {
        const double m = config_.landing_margin_px;
        return extent <= 2.0 * m ? extent / 2.0 : std::clamp(v, m, extent - m);
    };
    return {pull_in(px.x, screen.width_px), pull_in(px.y, screen.height_px)};
}

CommandBatch InteractionModel::on_pose_frame(std::span<const DevicePose> frame)
{
    std::set<DeviceId> seen;
    for (const DevicePose& pose : frame) {
        if (!state_.screens.contains(pose.device_id)) {
            throw ModelError(ModelErrorCode::UnknownDevice, "pose for unknown device " +
                                                                std::to_string(pose.device_id));
        }
        if (!pose.center.finite()) {
            throw ModelError(ModelErrorCode::InvalidInput, "pose position must be finite");
        }
        if (!seen.insert(pose.device_id).second) {
            throw ModelError(ModelErrorCode::InvalidInput, "device appears twice in one frame");
        }
    }

    bool changed = false;
    for (const DevicePose& pose : frame) {
        auto [it, inserted] = state_.poses.try_emplace(pose.device_id, pose);
        if (inserted) {
            changed = true;
            continue;
        }
        if (pose.frame_time_ms < it->second.frame_time_ms) {
            continue;  // stale
        }
        if (!(it->second == pose)) {
            changed = changed || it->second.center != pose.center || it->second.angles != pose.angles;
            it->second = pose;
        }
    }

    CommandBatch out;
    if (changed) {
        recompute_all_globals();
        refresh_lines(out);
    }
    return out;
}

// Views -----------------------------------------------------------------------

CommandBatch InteractionModel::replay_for(DeviceId device) const
{
    CommandBatch out;
    for (const auto& [id, r] : state_.resources) {
        if (r.host_device == device) {
            out.push_back({device, cmd::ResourceDef{id, r.text, r.timestamp.has_value()}});
            out.push_back({device, cmd::Show{id, r.local_pos.x, r.local_pos.y}});
        }
    }
    for (const auto& [id, host] : state_.rendered_highlights) {
        if (host == device) {
            out.push_back({device, cmd::Highlight{id, true}});
        }
    }
    for (const auto& [key, line] : state_.rendered_lines) {
        if (line.device_id == device) {
            out.push_back({device, line_command(key, line, true)});
        }
    }
    return out;
}

DeviceView InteractionModel::view_of(DeviceId device) const
{
    DeviceView view;
    for (const auto& [id, r] : state_.resources) {
        if (r.host_device == device) {
            const auto h = state_.rendered_highlights.find(id);
            view.notes[id] = {r.local_pos.x, r.local_pos.y,
                              h != state_.rendered_highlights.end() && h->second == device};
        }
    }
    for (const auto& [key, line] : state_.rendered_lines) {
        if (line.device_id != device) {
            continue;
        }
        if (line.point) {
            view.point_lines.emplace(line.anchor, line.point->x, line.point->y);
        } else {
            view.local_lines.emplace(key.from, key.to);
        }
    }
    return view;
}

std::vector<DeviceSnapshot> InteractionModel::device_snapshots() const
{
    std::vector<DeviceSnapshot> out;
    for (const auto& [id, screen] : state_.screens) {
        DeviceSnapshot snap{id, screen, std::nullopt};
        if (const auto p = state_.poses.find(id); p != state_.poses.end()) {
            snap.pose = p->second;
        }
        out.push_back(snap);
    }
    return out;
}

// Serialisation ---------------------------------------------------------------

namespace {

std::string_view part_name(LineKey::Part p)
{
    switch (p) {
    case LineKey::Part::local: return "local";
    case LineKey::Part::from_side: return "from_side";
    case LineKey::Part::to_side: return "to_side";
    }
    return "?";
}

LineKey::Part part_from_name(const std::string& s)
{
    if (s == "local") {
        return LineKey::Part::local;
    }
    if (s == "from_side") {
        return LineKey::Part::from_side;
    }
    if (s == "to_side") {
        return LineKey::Part::to_side;
    }
    throw std::invalid_argument("unknown line part '" + s + "'");
}

template <class T>
ojson optional_json(const std::optional<T>& v)
{
    return v ? ojson(*v) : ojson(nullptr);
}

template <class T>
std::optional<T> optional_from(const ojson& j)
{
    if (j.is_null()) {
        return std::nullopt;
    }
    return j.get<T>();
}

}  // namespace

ojson InteractionModel::to_json() const
{
    ojson devices = ojson::array();
    for (const auto& [id, screen] : state_.screens) {
        const auto pose = state_.poses.find(id);
        devices.push_back(ojson{{"device_id", id},
                                {"screen", json_codec::screen_to_json(screen)},
                                {"pose", pose == state_.poses.end() ? ojson(nullptr)
                                                                    : json_codec::pose_to_json(pose->second)}});
    }
    ojson resources = ojson::array();
    for (const auto& [id, r] : state_.resources) {
        resources.push_back(ojson{{"resource_id", id},
                                  {"text", r.text},
                                  {"tags", r.tags},
                                  {"timestamp", optional_json(r.timestamp)},
                                  {"host_device", optional_json(r.host_device)},
                                  {"x_px", r.local_pos.x},
                                  {"y_px", r.local_pos.y}});
    }
    ojson relations = ojson::array();
    for (const Relation& rel : state_.relations) {
        relations.push_back(ojson{{"a", rel.a}, {"b", rel.b}, {"kind", to_string(rel.kind)}});
    }
    ojson globals = ojson::array();
    for (const auto& [id, g] : state_.global_pos) {
        globals.push_back(ojson{{"resource_id", id}, {"x_mm", g.x}, {"y_mm", g.y}, {"z_mm", g.z}});
    }
    ojson highlights = ojson::array();
    for (const auto& [id, device] : state_.rendered_highlights) {
        highlights.push_back(ojson{{"resource_id", id}, {"device_id", device}});
    }
    ojson lines = ojson::array();
    for (const auto& [key, line] : state_.rendered_lines) {
        ojson l{{"from", key.from},
                {"to", key.to},
                {"part", part_name(key.part)},
                {"device_id", line.device_id},
                {"anchor", line.anchor}};
        l["x_px"] = line.point ? ojson(line.point->x) : ojson(nullptr);
        l["y_px"] = line.point ? ojson(line.point->y) : ojson(nullptr);
        lines.push_back(std::move(l));
    }
    return ojson{{"devices", devices},
                 {"resources", resources},
                 {"relations", relations},
                 {"global_pos", globals},
                 {"highlight_active", optional_json(state_.highlight_active)},
                 {"timeline_active", state_.timeline_active},
                 {"rendered_highlights", highlights},
                 {"rendered_lines", lines}};
}

InteractionModel InteractionModel::from_json(const ojson& j, ModelConfig config)
{
    InteractionModel m(config);
    InteractionState& s = m.state_;
    for (const ojson& d : j.at("devices")) {
        const DeviceId id = d.at("device_id").get<DeviceId>();
        s.screens[id] = json_codec::screen_from_json(d.at("screen"));
        if (!d.at("pose").is_null()) {
            s.poses[id] = json_codec::pose_from_json(d.at("pose"));
        }
    }
    for (const ojson& rj : j.at("resources")) {
        Resource r;
        r.resource_id = rj.at("resource_id").get<ResourceId>();
        r.text = rj.at("text").get<std::string>();
        r.tags = rj.at("tags").get<std::set<std::string>>();
        r.timestamp = optional_from<std::int64_t>(rj.at("timestamp"));
        r.host_device = optional_from<DeviceId>(rj.at("host_device"));
        r.local_pos = {rj.at("x_px").get<double>(), rj.at("y_px").get<double>()};
        s.resources[r.resource_id] = std::move(r);
    }
    for (const ojson& rel : j.at("relations")) {
        s.relations.insert(Relation::make(rel.at("a").get<ResourceId>(), rel.at("b").get<ResourceId>(),
                                          relation_kind_from_string(rel.at("kind").get<std::string>())));
    }
    for (const ojson& g : j.at("global_pos")) {
        s.global_pos[g.at("resource_id").get<ResourceId>()] = {g.at("x_mm").get<double>(), g.at("y_mm").get<double>(),
                                                               g.at("z_mm").get<double>()};
    }
    s.highlight_active = optional_from<ResourceId>(j.at("highlight_active"));
    s.timeline_active = j.at("timeline_active").get<bool>();
    for (const ojson& h : j.at("rendered_highlights")) {
        s.rendered_highlights[h.at("resource_id").get<ResourceId>()] = h.at("device_id").get<DeviceId>();
    }
    for (const ojson& l : j.at("rendered_lines")) {
        LineKey key{l.at("from").get<ResourceId>(), l.at("to").get<ResourceId>(),
                    part_from_name(l.at("part").get<std::string>())};
        RenderedLine line{l.at("device_id").get<DeviceId>(), l.at("anchor").get<ResourceId>(), std::nullopt};
        if (!l.at("x_px").is_null()) {
            line.point = Vec2{l.at("x_px").get<double>(), l.at("y_px").get<double>()};
        }
        s.rendered_lines[key] = line;
    }
    return m;
}

}  // namespace mosaic
