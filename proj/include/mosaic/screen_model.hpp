#pragma once

#include <map>
#include <string>

#include "mosaic/protocol.hpp"

namespace mosaic {

/// A device's mirror of what it has been told to display. Holds no
/// interaction logic: it only accumulates ServerCommands.
class ScreenModel {
public:
    void apply(const ServerCommand& command);

    /// The device moved a note itself (drag); the server learns via `moved`.
    void move_locally(ResourceId id, Vec2 p);

    const DeviceView& view() const { return view_; }
    const std::map<ResourceId, std::string>& texts() const { return texts_; }
    bool shows(ResourceId id) const { return view_.notes.contains(id); }

private:
    DeviceView view_;
    std::map<ResourceId, std::string> texts_;
};

}  // namespace mosaic
