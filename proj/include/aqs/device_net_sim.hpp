#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aqs/common.hpp"
#include "aqs/field_model.hpp"
#include "aqs/power_profile.hpp"
#include "aqs/rng.hpp"

namespace aqs {

enum class SampleFlag { ok, outlier, calibrated };

const char* to_string(SampleFlag f);

/// One detection record, the unit every downstream module works on.
struct Sample {
    int device_id = -1;
    Vec3 position;
    double time = 0.0;  // s, sensing time
    double pm25 = 0.0;  // ug/m^3
    double pm10 = 0.0;  // ug/m^3
    SampleFlag flag = SampleFlag::ok;
};

enum class DeviceKind { ground, aerial };

struct Calibration {
    double gain = 1.0;
    double offset = 0.0;
};

struct Command {
    int device_id = -1;
    int sensing_interval_min = 30;
    int uploading_interval_min = 60;
    double issue_time = 0.0;
};

struct NoiseModel {
    double sigma_rel = 0.05;   // relative Gaussian noise
    double p_fault = 0.0;      // probability a reading is replaced by garbage
    double fault_low = 400.0;  // corrupt range, ug/m^3
    double fault_high = 600.0;
    double pm10_ratio = 1.6;   // synthetic PM10 = ratio * PM2.5 truth
};

struct LinkModel {
    double latency_base_s = 2.0;
    double latency_jitter_s = 1.0;  // uniform in [0, jitter), seeded
    double loss_probability = 0.0;

    void validate() const {
        if (latency_base_s < 0 || latency_jitter_s < 0)
            throw ValidationError("link: latency must be >= 0");
        if (loss_probability < 0 || loss_probability >= 1)
            throw ValidationError("link: loss_probability must be in [0,1)");
    }
};

struct DeviceConfig {
    int id = 0;
    DeviceKind kind = DeviceKind::ground;
    Vec3 position;
    double battery_mAh = 13600.0;
    int sensing_interval_min = 30;
    int uploading_interval_min = 60;
    Calibration calibration;
    std::uint64_t noise_seed = 0;
};

enum class ActionType { wake, command_applied, sense, upload, upload_lost, sleep, dead };

const char* to_string(ActionType a);

struct Action {
    ActionType type;
    double time;
};

struct EnergyLedgerEntry {
    double time;
    ActionType action;  // wake, sense, upload, sleep
    std::int64_t cost_umah;
};

/// Runtime state of one sensing node: schedule, charge, buffer, pending command.
struct DeviceState {
    DeviceConfig cfg;
    PowerProfile profile;
    NoiseModel noise;
    std::int64_t battery_umah = 0;
    std::int64_t initial_umah = 0;
    int sensing_interval_min = 30;
    int uploading_interval_min = 60;
    std::vector<Sample> buffer;
    std::optional<Command> pending_command;
    bool dead = false;
    double dead_time = -1.0;
    std::vector<EnergyLedgerEntry> ledger;
    Rng rng;

    DeviceState(const DeviceConfig& c, const PowerProfile& p, const NoiseModel& n)
        : cfg(c),
          profile(p),
          noise(n),
          battery_umah(to_umah(c.battery_mAh)),
          initial_umah(to_umah(c.battery_mAh)),
          sensing_interval_min(c.sensing_interval_min),
          uploading_interval_min(c.uploading_interval_min),
          rng(c.noise_seed) {}
};

struct ReceivedSample {
    Sample sample;
    double receive_time;
};

struct CommandLogEntry {
    Command cmd;
    std::string via;     // "short_message" or "response"
    double applied_time = -1.0;
    std::string status = "pending";  // pending, applied, rejected, dead_target
};

struct InFlightMessage {
    int device_id;
    std::vector<Sample> samples;
    double send_time;
    double arrival_time;
    std::uint64_t seq;
};

struct ServerResponse {
    bool accepted = false;           // false when the transport lost the upload
    std::optional<Command> command;  // filled at delivery, recorded in the log
};

/// Server-side bookkeeping plus the in-flight message queue of the transport.
class ServerState {
public:
    explicit ServerState(std::uint64_t link_seed) : link_rng_(link_seed) {}

    std::vector<ReceivedSample> received;
    std::vector<CommandLogEntry> command_log;

    /// Queues a command to piggyback on the target's next delivered upload.
    void queue_piggyback(const Command& cmd);

    /// Registers a device so short messages can address it.
    void register_device(int device_id) { known_devices_.push_back(device_id); }
    bool knows_device(int device_id) const;

    Rng& link_rng() { return link_rng_; }
    std::uint64_t next_seq() { return seq_++; }

    std::vector<InFlightMessage> in_flight;
    std::map<int, std::size_t> piggyback;  // device id -> index into command_log

    /// Delivers every in-flight message with arrival < until, in
    /// (arrival_time, seq) order. Devices looked up by id for command receipt.
    void deliver_due(double until, std::map<int, DeviceState*>& devices);

private:
    Rng link_rng_;
    std::uint64_t seq_ = 0;
    std::vector<int> known_devices_;
};

/// One minute tick of a device: wake, notice a pending short message, sense and
/// upload when due, sleep. Returns every action taken. When `server` is null an
/// upload that is due is reported as ActionType::upload without executing.
std::vector<Action> step_device(DeviceState& state, int minute_tick, const Field& field,
                                ServerState* server = nullptr, const LinkModel* link = nullptr);

/// Reads truth at the device position, applies relative Gaussian noise and the
/// seeded fault branch, and deducts sensing energy.
Sample sense(DeviceState& state, const Field& field, double time);

/// Sends the buffered samples; charges upload energy regardless of loss. On
/// loss the buffer is retained for the next upload tick.
ServerResponse upload(DeviceState& state, ServerState& server, const LinkModel& link, double time);

/// Stores a command the target notices at its next wake tick (last writer wins).
void send_short_message(ServerState& server, std::map<int, DeviceState*>& devices,
                        const Command& cmd);

struct ScheduledCommand {
    Command cmd;
    std::string via = "short_message";  // or "response"
};

struct SimConfig {
    GridSpec grid;
    std::vector<SourceSpec> sources;
    DiffusionParams dynamics;
    std::vector<DeviceConfig> devices;
    LinkModel link;
    PowerProfile profile;
    NoiseModel noise;
    std::vector<ScheduledCommand> commands;
    int duration_min = 120;
    std::uint64_t master_seed = 0;

    void validate() const;
};

struct DeviceReport {
    int device_id;
    std::int64_t initial_umah;
    std::int64_t final_umah;
    bool dead;
    double dead_time;
    std::vector<EnergyLedgerEntry> ledger;
    std::optional<Command> unapplied_pending;
};

struct SimulationTrace {
    std::vector<ReceivedSample> received;
    std::vector<CommandLogEntry> command_log;
    std::vector<DeviceReport> devices;
    int duration_min = 0;

    /// CSV of received samples: device_id,x,y,z,t,pm25,pm10,flag.
    void write_samples_csv(std::ostream& out) const;
    /// JSON energy ledger per device.
    std::string ledgers_json() const;
};

/// Advances a global minute clock: device ticks in ascending id order, then the
/// in-flight messages in (arrival_time, seq) order. Bit-reproducible for a
/// fixed config.
SimulationTrace run_simulation(const SimConfig& config, const Field& field);

}  // namespace aqs
