#include "mosaic/screen_model.hpp"

namespace mosaic {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

void ScreenModel::apply(const ServerCommand& command)
{
    std::visit(overloaded{
                   [&](const cmd::ResourceDef& c) { texts_[c.resource_id] = c.text; },
                   [&](const cmd::Show& c) {
                       auto& note = view_.notes[c.resource_id];
                       note.x_px = c.x_px;
                       note.y_px = c.y_px;
                   },
                   [&](const cmd::Hide& c) {
                       // Hiding a note takes everything drawn from it along.
                       view_.notes.erase(c.resource_id);
                       std::erase_if(view_.local_lines, [&](const auto& l) {
                           return l.first == c.resource_id || l.second == c.resource_id;
                       });
                       std::erase_if(view_.point_lines,
                                     [&](const auto& l) { return std::get<0>(l) == c.resource_id; });
                   },
                   [&](const cmd::Highlight& c) {
                       const auto it = view_.notes.find(c.resource_id);
                       if (it != view_.notes.end()) {
                           it->second.highlighted = c.on;
                       }
                   },
                   [&](const cmd::LineLocal& c) {
                       const std::pair key{c.from_resource, c.to_resource};
                       if (c.on) {
                           view_.local_lines.insert(key);
                       } else {
                           view_.local_lines.erase(key);
                       }
                   },
                   [&](const cmd::LineToPoint& c) {
                       const DeviceView::PointLine key{c.resource_id, c.x_px, c.y_px};
                       if (c.on) {
                           view_.point_lines.insert(key);
                       } else {
                           const auto it = view_.point_lines.find(key);
                           if (it != view_.point_lines.end()) {
                               view_.point_lines.erase(it);
                           }
                       }
                   },
                   [](const cmd::Error&) {},
                   [](const cmd::StateDump&) {},
               },
               command);
}

void ScreenModel::move_locally(ResourceId id, Vec2 p)
{
    const auto it = view_.notes.find(id);
    if (it != view_.notes.end()) {
        it->second.x_px = p.x;
        it->second.y_px = p.y;
    }
}

}  // namespace mosaic
