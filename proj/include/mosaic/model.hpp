#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mosaic/geometry.hpp"
#include "mosaic/protocol.hpp"

namespace mosaic {

/// One information item (a post-it note).
struct Resource {
    ResourceId resource_id = 0;
    std::string text;
    std::set<std::string> tags;
    std::optional<std::int64_t> timestamp;  // event time, minutes
    std::optional<DeviceId> host_device;    // nullopt: hidden
    Vec2 local_pos;                         // px, centre of the note on its host screen

    friend bool operator==(const Resource&, const Resource&) = default;
};

enum class RelationKind { reference, temporal };

std::string_view to_string(RelationKind kind);
RelationKind relation_kind_from_string(std::string_view s);

/// Reference relations are unordered and stored with a < b.
struct Relation {
    ResourceId a = 0;
    ResourceId b = 0;
    RelationKind kind = RelationKind::reference;

    static Relation make(ResourceId a, ResourceId b, RelationKind kind);

    friend auto operator<=>(const Relation&, const Relation&) = default;
};

struct AddressedCommand {
    DeviceId device_id = 0;
    ServerCommand command;
    friend bool operator==(const AddressedCommand&, const AddressedCommand&) = default;
};

using CommandBatch = std::vector<AddressedCommand>;

enum class ModelErrorCode {
    UnknownResource,
    UnknownDevice,
    WrongHost,
    NoTemporalData,
    BelowThreshold,
    InvalidInput,
};

std::string_view to_string(ModelErrorCode code);

class ModelError : public std::runtime_error {
public:
    ModelError(ModelErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ModelErrorCode code() const { return code_; }

private:
    ModelErrorCode code_;
};

struct ModelConfig {
    double throw_threshold_px_s = 1000.0;
    double landing_margin_px = 40.0;
    double line_damping_px = 1.0;
};

/// Identifies one drawn timeline segment. A pair of consecutive events on the
/// same host draws one local line; on different hosts it draws one segment on
/// each host.
struct LineKey {
    enum class Part { local, from_side, to_side };
    ResourceId from = 0;
    ResourceId to = 0;
    Part part = Part::local;
    friend auto operator<=>(const LineKey&, const LineKey&) = default;
};

/// A segment as last sent to a device.
struct RenderedLine {
    DeviceId device_id = 0;
    ResourceId anchor = 0;      // resource the segment starts at
    std::optional<Vec2> point;  // off-resource endpoint; nullopt for local lines
    friend bool operator==(const RenderedLine&, const RenderedLine&) = default;
};

struct InteractionState {
    std::map<DeviceId, DevicePose> poses;
    std::map<DeviceId, ScreenSpec> screens;
    std::map<ResourceId, Resource> resources;
    std::set<Relation> relations;
    std::map<ResourceId, Vec3> global_pos;
    std::optional<ResourceId> highlight_active;
    bool timeline_active = false;

    // What has been sent and not yet retracted.
    std::map<ResourceId, DeviceId> rendered_highlights;
    std::map<LineKey, RenderedLine> rendered_lines;

    friend bool operator==(const InteractionState&, const InteractionState&) = default;
};

/// Decides what every device shows. Not thread-safe; owned by one event loop.
///
/// Every operation either fails with ModelError before touching the state
/// or applies fully and returns the commands to send, in order.
class InteractionModel {
public:
    explicit InteractionModel(ModelConfig config = {});

    // Setup.
    void add_device(DeviceId id, const ScreenSpec& screen);
    void add_resource(Resource resource);
    void add_relation(const Relation& relation);

    // Inputs.
    CommandBatch on_moved(DeviceId device, ResourceId resource, Vec2 p);
    CommandBatch on_clicked(DeviceId device, ResourceId resource);
    CommandBatch on_long_clicked(DeviceId device, ResourceId resource);
    CommandBatch on_thrown(DeviceId device, ResourceId resource, Vec2 v_px_s);
    CommandBatch on_pose_frame(std::span<const DevicePose> frame);

    // Queries.
    std::set<ResourceId> related_set(ResourceId resource) const;
    std::vector<ResourceId> timeline_order() const;

    /// Commands that rebuild a device's screen from nothing.
    CommandBatch replay_for(DeviceId device) const;
    DeviceView view_of(DeviceId device) const;
    std::vector<DeviceSnapshot> device_snapshots() const;

    const InteractionState& state() const { return state_; }
    const ModelConfig& config() const { return config_; }
    std::optional<Transform> transform_of(DeviceId device) const;

    /// Canonical serialisation; equal states serialise to identical bytes.
    nlohmann::ordered_json to_json() const;
    static InteractionModel from_json(const nlohmann::ordered_json& j, ModelConfig config = {});

private:
    const Resource& resource_or_throw(ResourceId id) const;
    void require_host(const Resource& r, DeviceId device) const;

    void recompute_global(ResourceId id);
    void recompute_all_globals();

    void refresh_highlights(CommandBatch& out);
    void clear_highlights(CommandBatch& out);
    std::map<ResourceId, DeviceId> desired_highlights() const;

    void refresh_lines(CommandBatch& out);
    void clear_lines(CommandBatch& out);
    std::map<LineKey, RenderedLine> desired_lines() const;

    /// Forgets what a device drew for a resource it has just been told to hide.
    void forget_rendered(ResourceId resource, DeviceId device);

    Vec2 landing_position(const Resource& r, DeviceId target, double theta) const;

    ModelConfig config_;
    InteractionState state_;
};

}  // namespace mosaic
