#include "aqs/device_net_sim.hpp"

#include <algorithm>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace aqs {

const char* to_string(SampleFlag f) {
    switch (f) {
        case SampleFlag::ok: return "ok";
        case SampleFlag::outlier: return "outlier";
        case SampleFlag::calibrated: return "calibrated";
    }
    return "?";
}

const char* to_string(ActionType a) {
    switch (a) {
        case ActionType::wake: return "wake";
        case ActionType::command_applied: return "command_applied";
        case ActionType::sense: return "sense";
        case ActionType::upload: return "upload";
        case ActionType::upload_lost: return "upload_lost";
        case ActionType::sleep: return "sleep";
        case ActionType::dead: return "dead";
    }
    return "?";
}

namespace {

// Charges `cost` if affordable; otherwise marks the device dead at `time`.
// Returns false when the device died instead of paying.
bool charge(DeviceState& st, double time, ActionType action, std::int64_t cost) {
    if (st.battery_umah < cost) {
        st.dead = true;
        st.dead_time = time;
        return false;
    }
    st.battery_umah -= cost;
    st.ledger.push_back({time, action, cost});
    return true;
}

}  // namespace

Sample sense(DeviceState& state, const Field& field, double time) {
    if (state.dead) throw RuntimeFailure("sense: device is dead");
    double truth = field.sample_truth(state.cfg.position, time);

    // draw order is part of the replay contract: pm25 noise, pm10 noise, fault
    double pm25 = truth * (1.0 + state.noise.sigma_rel * state.rng.gaussian());
    double pm10 = truth * state.noise.pm10_ratio * (1.0 + state.noise.sigma_rel * state.rng.gaussian());
    double u_fault = state.rng.uniform01();
    if (u_fault < state.noise.p_fault) {
        pm25 = state.rng.uniform(state.noise.fault_low, state.noise.fault_high);
        pm10 = pm25 * state.noise.pm10_ratio;
    }

    Sample s;
    s.device_id = state.cfg.id;
    s.position = state.cfg.position;
    s.time = time;
    s.pm25 = std::max(0.0, pm25);
    s.pm10 = std::max(0.0, pm10);
    s.flag = SampleFlag::ok;
    return s;
}

ServerResponse upload(DeviceState& state, ServerState& server, const LinkModel& link, double time) {
    if (state.buffer.empty()) throw RuntimeFailure("upload: buffer empty");

    double u_loss = server.link_rng().uniform01();
    bool lost = u_loss < link.loss_probability;
    ServerResponse resp;
    if (lost) {
        resp.accepted = false;
        return resp;  // buffer retained for the next upload tick
    }
    double jitter = link.latency_jitter_s > 0 ? server.link_rng().uniform(0.0, link.latency_jitter_s)
                                              : 0.0;
    InFlightMessage msg;
    msg.device_id = state.cfg.id;
    msg.samples = std::move(state.buffer);
    state.buffer.clear();
    msg.send_time = time;
    msg.arrival_time = time + link.latency_base_s + jitter;
    msg.seq = server.next_seq();
    server.in_flight.push_back(std::move(msg));
    resp.accepted = true;
    return resp;
}

void ServerState::queue_piggyback(const Command& cmd) {
    CommandLogEntry entry;
    entry.cmd = cmd;
    entry.via = "response";
    if (cmd.sensing_interval_min < 1 || cmd.uploading_interval_min < 1) {
        entry.status = "rejected";
        command_log.push_back(entry);
        return;
    }
    command_log.push_back(entry);
    piggyback[cmd.device_id] = command_log.size() - 1;
}

bool ServerState::knows_device(int device_id) const {
    return std::find(known_devices_.begin(), known_devices_.end(), device_id) !=
           known_devices_.end();
}

void send_short_message(ServerState& server, std::map<int, DeviceState*>& devices,
                        const Command& cmd) {
    if (!server.knows_device(cmd.device_id))
        throw ValidationError("send_short_message: unknown device id " +
                              std::to_string(cmd.device_id));
    CommandLogEntry entry;
    entry.cmd = cmd;
    entry.via = "short_message";
    if (cmd.sensing_interval_min < 1 || cmd.uploading_interval_min < 1) {
        entry.status = "rejected";
        server.command_log.push_back(entry);
        return;
    }
    server.command_log.push_back(entry);
    devices.at(cmd.device_id)->pending_command = cmd;  // last writer wins
}

void ServerState::deliver_due(double until, std::map<int, DeviceState*>& devices) {
    std::stable_sort(in_flight.begin(), in_flight.end(),
                     [](const InFlightMessage& a, const InFlightMessage& b) {
                         if (a.arrival_time != b.arrival_time) return a.arrival_time < b.arrival_time;
                         return a.seq < b.seq;
                     });
    std::size_t consumed = 0;
    for (InFlightMessage& msg : in_flight) {
        if (msg.arrival_time >= until) break;
        ++consumed;
        for (const Sample& s : msg.samples) received.push_back({s, msg.arrival_time});
        auto it = piggyback.find(msg.device_id);
        if (it != piggyback.end()) {
            CommandLogEntry& entry = command_log[it->second];
            DeviceState* dev = devices.at(msg.device_id);
            if (dev->dead) {
                entry.status = "dead_target";
            } else {
                dev->sensing_interval_min = entry.cmd.sensing_interval_min;
                dev->uploading_interval_min = entry.cmd.uploading_interval_min;
                entry.status = "applied";
                entry.applied_time = msg.arrival_time;
            }
            piggyback.erase(it);
        }
    }
    in_flight.erase(in_flight.begin(), in_flight.begin() + static_cast<long>(consumed));
}

std::vector<Action> step_device(DeviceState& state, int minute_tick, const Field& field,
                                ServerState* server, const LinkModel* link) {
    std::vector<Action> actions;
    const double t_now = minute_tick * 60.0;

    if (state.dead) return actions;

    if (!charge(state, t_now, ActionType::wake, to_umah(state.profile.e_wake))) {
        actions.push_back({ActionType::dead, t_now});
        return actions;
    }
    actions.push_back({ActionType::wake, t_now});

    if (state.pending_command && state.pending_command->issue_time < t_now) {
        const Command& cmd = *state.pending_command;
        state.sensing_interval_min = cmd.sensing_interval_min;
        state.uploading_interval_min = cmd.uploading_interval_min;
        if (server) {
            for (auto it = server->command_log.rbegin(); it != server->command_log.rend(); ++it) {
                if (it->via == "short_message" && it->cmd.device_id == state.cfg.id &&
                    it->status == "pending") {
                    it->status = "applied";
                    it->applied_time = t_now;
                    break;
                }
            }
        }
        state.pending_command.reset();
        actions.push_back({ActionType::command_applied, t_now});
    }

    if (minute_tick % state.sensing_interval_min == 0) {
        if (!charge(state, t_now, ActionType::sense, to_umah(state.profile.e_sense))) {
            actions.push_back({ActionType::dead, t_now});
            return actions;
        }
        Sample s = sense(state, field, t_now);
        state.buffer.push_back(s);
        actions.push_back({ActionType::sense, t_now});
    }

    if (minute_tick % state.uploading_interval_min == 0 && !state.buffer.empty()) {
        if (!charge(state, t_now, ActionType::upload, to_umah(state.profile.e_upload))) {
            actions.push_back({ActionType::dead, t_now});
            return actions;
        }
        if (server && link) {
            ServerResponse resp = upload(state, *server, *link, t_now);
            actions.push_back({resp.accepted ? ActionType::upload : ActionType::upload_lost, t_now});
        } else {
            actions.push_back({ActionType::upload, t_now});
        }
    }

    if (!charge(state, t_now, ActionType::sleep, to_umah(state.profile.e_sleep_per_min))) {
        actions.push_back({ActionType::dead, t_now});
        return actions;
    }
    actions.push_back({ActionType::sleep, t_now});
    return actions;
}

void SimConfig::validate() const {
    grid.validate();
    link.validate();
    profile.validate();
    if (duration_min < 0) throw ValidationError("sim: duration_min must be >= 0");
    std::set<int> ids;
    for (std::size_t i = 0; i < devices.size(); ++i) {
        const DeviceConfig& d = devices[i];
        std::string where = "devices[" + std::to_string(i) + "]";
        if (!ids.insert(d.id).second)
            throw ValidationError(where + ": duplicate device id " + std::to_string(d.id));
        if (d.sensing_interval_min < 1)
            throw ValidationError(where + ".sensing_interval_min: must be >= 1");
        if (d.uploading_interval_min < 1)
            throw ValidationError(where + ".uploading_interval_min: must be >= 1");
        if (d.battery_mAh < 0) throw ValidationError(where + ".battery_mAh: must be >= 0");
        if (!(d.calibration.gain > 0)) throw ValidationError(where + ".calibration.gain: must be > 0");
        const double h = grid.cell_size;
        if (d.position.x < 0 || d.position.x > grid.nx * h || d.position.y < 0 ||
            d.position.y > grid.ny * h || d.position.z < 0 || d.position.z > grid.nz * h)
            throw ValidationError(where + ".position: outside field grid");
    }
    for (std::size_t i = 0; i < commands.size(); ++i) {
        const ScheduledCommand& c = commands[i];
        std::string where = "commands[" + std::to_string(i) + "]";
        if (!ids.count(c.cmd.device_id))
            throw ValidationError(where + ": unknown device id " + std::to_string(c.cmd.device_id));
        if (c.via != "short_message" && c.via != "response")
            throw ValidationError(where + ".via: must be short_message or response");
        if (c.cmd.sensing_interval_min < 1 || c.cmd.uploading_interval_min < 1)
            throw ValidationError(where + ": intervals must be >= 1");
    }
}

SimulationTrace run_simulation(const SimConfig& config, const Field& field) {
    config.validate();

    std::vector<DeviceState> devices;
    devices.reserve(config.devices.size());
    std::vector<DeviceConfig> roster = config.devices;
    std::sort(roster.begin(), roster.end(),
              [](const DeviceConfig& a, const DeviceConfig& b) { return a.id < b.id; });
    for (const DeviceConfig& dc : roster) {
        DeviceConfig local = dc;
        if (local.noise_seed == 0)
            local.noise_seed = derive_seed(config.master_seed, "device", static_cast<std::uint64_t>(dc.id));
        devices.emplace_back(local, config.profile, config.noise);
    }

    ServerState server(derive_seed(config.master_seed, "link"));
    std::map<int, DeviceState*> by_id;
    for (DeviceState& d : devices) {
        server.register_device(d.cfg.id);
        by_id[d.cfg.id] = &d;
    }

    std::vector<ScheduledCommand> schedule = config.commands;
    std::stable_sort(schedule.begin(), schedule.end(),
                     [](const ScheduledCommand& a, const ScheduledCommand& b) {
                         return a.cmd.issue_time < b.cmd.issue_time;
                     });
    std::size_t next_cmd = 0;

    for (int tick = 0; tick < config.duration_min; ++tick) {
        const double t_now = tick * 60.0;
        while (next_cmd < schedule.size() && schedule[next_cmd].cmd.issue_time < t_now) {
            const ScheduledCommand& sc = schedule[next_cmd];
            if (sc.via == "short_message")
                send_short_message(server, by_id, sc.cmd);
            else
                server.queue_piggyback(sc.cmd);
            ++next_cmd;
        }
        for (DeviceState& dev : devices) step_device(dev, tick, field, &server, &config.link);
        server.deliver_due((tick + 1) * 60.0, by_id);
    }

    SimulationTrace trace;
    trace.duration_min = config.duration_min;
    trace.received = std::move(server.received);
    trace.command_log = std::move(server.command_log);
    for (DeviceState& d : devices) {
        DeviceReport r;
        r.device_id = d.cfg.id;
        r.initial_umah = d.initial_umah;
        r.final_umah = d.battery_umah;
        r.dead = d.dead;
        r.dead_time = d.dead_time;
        r.ledger = std::move(d.ledger);
        if (d.pending_command) r.unapplied_pending = d.pending_command;
        trace.devices.push_back(std::move(r));
    }
    return trace;
}

void SimulationTrace::write_samples_csv(std::ostream& out) const {
    out << "device_id,x,y,z,t,pm25,pm10,flag\n";
    for (const ReceivedSample& r : received) {
        const Sample& s = r.sample;
        out << s.device_id << ',' << fmt_double(s.position.x) << ',' << fmt_double(s.position.y)
            << ',' << fmt_double(s.position.z) << ',' << fmt_double(s.time) << ','
            << fmt_double(s.pm25) << ',' << fmt_double(s.pm10) << ',' << to_string(s.flag) << '\n';
    }
}

std::string SimulationTrace::ledgers_json() const {
    nlohmann::json root;
    for (const DeviceReport& d : devices) {
        nlohmann::json jd;
        jd["initial_mAh"] = from_umah(d.initial_umah);
        jd["final_mAh"] = from_umah(d.final_umah);
        jd["initial_umah"] = d.initial_umah;
        jd["final_umah"] = d.final_umah;
        jd["dead"] = d.dead;
        if (d.dead) jd["dead_time"] = d.dead_time;
        if (d.unapplied_pending) {
            jd["unapplied_pending"] = {
                {"sensing_interval_min", d.unapplied_pending->sensing_interval_min},
                {"uploading_interval_min", d.unapplied_pending->uploading_interval_min},
                {"issue_time", d.unapplied_pending->issue_time}};
        }
        nlohmann::json entries = nlohmann::json::array();
        for (const EnergyLedgerEntry& e : d.ledger) {
            entries.push_back(
                {{"t", e.time}, {"action", to_string(e.action)}, {"cost_umah", e.cost_umah}});
        }
        jd["ledger"] = std::move(entries);
        root[std::to_string(d.device_id)] = std::move(jd);
    }
    return root.dump(2);
}

}  // namespace aqs
