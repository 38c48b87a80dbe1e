#include <stdexcept>

#include "mixguide/service.hpp"

namespace mixguide {

Json make_message(const std::string& kind, const std::string& session_id, std::int64_t seq, Json payload) {
    return Json{{"kind", kind}, {"session_id", session_id}, {"seq", seq}, {"payload", std::move(payload)}};
}

ProtocolSession::ProtocolSession(std::string session_id, Scenario scenario, GuideMixture mixture, SessionConfig cfg,
                                 std::shared_ptr<ReplanExecutor> executor)
    : id_(std::move(session_id)), engine_(std::move(scenario), std::move(mixture), cfg, std::move(executor)) {}

Json ProtocolSession::out(const std::string& kind, Json payload) {
    return make_message(kind, id_, seq_++, std::move(payload));
}

Json ProtocolSession::error(const std::string& code, const std::string& message, const Json& in_reply_to) {
    Json p{{"code", code}, {"message", message}};
    if (!in_reply_to.is_null()) p["reply_to"] = in_reply_to;
    return out("error", std::move(p));
}

Json ProtocolSession::scenario_sync() {
    return out("scenario_sync", Json{{"scenario", scenario_to_json(engine_.scenario())},
                                     {"geometry", scenario_geometry_json(engine_.scenario())},
                                     {"guides", engine_.guide_json()}});
}

std::vector<Json> ProtocolSession::handle_text(const std::string& text) {
    Json msg;
    try {
        msg = Json::parse(text);
    } catch (const Json::parse_error& e) {
        return {error("bad_json", e.what())};
    }
    return handle(msg);
}

std::vector<Json> ProtocolSession::handle(const Json& msg) {
    if (!msg.is_object() || !msg.contains("kind") || !msg.at("kind").is_string()) {
        return {error("bad_message", "message must be an object with a string kind")};
    }
    if (!msg.contains("seq") || !msg.at("seq").is_number_integer()) {
        return {error("bad_message", "message must carry an integer seq")};
    }
    const std::string kind = msg.at("kind").get<std::string>();
    const auto seq = msg.at("seq").get<std::int64_t>();
    if (seq <= last_client_seq_) {
        return {error("seq_order", "seq must increase; last was " + std::to_string(last_client_seq_), seq)};
    }
    last_client_seq_ = seq;

    if (kind == "hello") {
        const Json payload = msg.value("payload", Json::object());
        if (payload.is_object() && payload.contains("protocol") && payload.at("protocol") != kProtocolVersion) {
            return {error("protocol_version", "server speaks protocol " + std::to_string(kProtocolVersion), seq)};
        }
        greeted_ = true;
        const Scenario& s = engine_.scenario();
        Json hello = out("hello", Json{{"protocol", kProtocolVersion},
                                       {"variant", to_string(s.variant)},
                                       {"dof", s.dof()},
                                       {"control_rate", engine_.config().guidance.control_rate},
                                       {"tau_max", engine_.config().guidance.tau_max}});
        return {hello, scenario_sync()};
    }
    if (!greeted_) return {error("not_greeted", "send hello first", seq)};
    if (msg.value("session_id", std::string()) != id_) return {error("wrong_session", "unknown session id", seq)};
    if (kind == "pose_update") return on_pose(msg);
    if (kind == "env_edit") return on_edit(msg);
    return {error("unknown_kind", "unsupported message kind: " + kind, seq)};
}

std::vector<Json> ProtocolSession::on_pose(const Json& msg) {
    const auto seq = msg.at("seq").get<std::int64_t>();
    const int n = engine_.scenario().dof();
    Vector pose, vel;
    try {
        const Json& p = msg.at("payload");
        pose = vector_from_json(p.at("pose"));
        if (p.contains("velocity")) vel = vector_from_json(p.at("velocity"));
    } catch (const std::exception& e) {
        return {error("bad_pose", e.what(), seq)};
    }
    if (pose.size() != n || (vel.size() != 0 && vel.size() != n)) {
        return {error("bad_pose", "pose and velocity need " + std::to_string(n) + " entries", seq)};
    }
    if (vel.size() == 0) {
        // Backward difference at the control rate when the client sends poses only.
        const bool have_prev = last_pose_.size() == n && last_pose_.allFinite() && pose.allFinite();
        vel = have_prev ? Vector((pose - last_pose_) * engine_.config().guidance.control_rate) : Vector(Vector::Zero(n));
    }
    last_pose_ = pose;

    const GuidanceFrame f = engine_.step(pose, vel);
    Json payload = frame_to_json(f);
    payload["reply_to"] = seq;
    std::vector<Json> replies{out("guidance_frame", std::move(payload))};
    for (const auto& e : f.events) {
        if (e.kind == "replan_integrated") {
            replies.push_back(out("replan_notice", Json{{"status", "integrated"},
                                                        {"trigger", e.detail.at("trigger")},
                                                        {"added_plan_ids", e.detail.at("plan_ids")},
                                                        {"guides", engine_.guide_json()}}));
        } else if (e.kind == "replan_failed") {
            replies.push_back(out("replan_notice", Json{{"status", "failed"},
                                                        {"trigger", e.detail.at("trigger")},
                                                        {"error", e.detail.at("error")}}));
        }
    }
    return replies;
}

std::vector<Json> ProtocolSession::on_edit(const Json& msg) {
    const auto seq = msg.at("seq").get<std::int64_t>();
    try {
        engine_.apply_env_edit(edit_from_json(msg.at("payload").at("edit")));
    } catch (const std::exception& e) {
        return {error("bad_edit", e.what(), seq)};
    }
    return {scenario_sync()};
}

}  // namespace mixguide
