//! The closed vocabulary of opposite vehicle actions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the seven opposite-action pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairId {
    DriveReverse,
    EnterExitVehicle,
    LoadUnloadVehicle,
    OpenCloseTrunk,
    OpenCloseVehicleDoor,
    StartStop,
    TurnLeftRight,
}

impl PairId {
    pub const ALL: [PairId; 7] = [
        PairId::DriveReverse,
        PairId::EnterExitVehicle,
        PairId::LoadUnloadVehicle,
        PairId::OpenCloseTrunk,
        PairId::OpenCloseVehicleDoor,
        PairId::StartStop,
        PairId::TurnLeftRight,
    ];

    /// The two actions of this pair, `First` polarity first.
    pub fn actions(self) -> [Action; 2] {
        match self {
            PairId::DriveReverse => [Action::DriveForward, Action::Reverse],
            PairId::EnterExitVehicle => [Action::EnterVehicle, Action::ExitVehicle],
            PairId::LoadUnloadVehicle => [Action::LoadVehicle, Action::UnloadVehicle],
            PairId::OpenCloseTrunk => [Action::OpenTrunk, Action::CloseTrunk],
            PairId::OpenCloseVehicleDoor => [Action::OpenVehicleDoor, Action::CloseVehicleDoor],
            PairId::StartStop => [Action::Start, Action::Stop],
            PairId::TurnLeftRight => [Action::TurnLeft, Action::TurnRight],
        }
    }

    /// Whether the pair takes part in the inter-pair protocol. Drive forward and
    /// reverse always co-occur with other vehicle movements, so they never form
    /// an isolated class there.
    pub fn in_inter_pair(self) -> bool {
        self != PairId::DriveReverse
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PairId::DriveReverse => "drive_reverse",
            PairId::EnterExitVehicle => "enter_exit_vehicle",
            PairId::LoadUnloadVehicle => "load_unload_vehicle",
            PairId::OpenCloseTrunk => "open_close_trunk",
            PairId::OpenCloseVehicleDoor => "open_close_vehicle_door",
            PairId::StartStop => "start_stop",
            PairId::TurnLeftRight => "turn_left_right",
        }
    }
}

impl fmt::Display for PairId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    First,
    Second,
}

/// A vehicle-related action class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    DriveForward,
    Reverse,
    EnterVehicle,
    ExitVehicle,
    LoadVehicle,
    UnloadVehicle,
    OpenTrunk,
    CloseTrunk,
    OpenVehicleDoor,
    CloseVehicleDoor,
    Start,
    Stop,
    TurnLeft,
    TurnRight,
}

impl Action {
    pub const ALL: [Action; 14] = [
        Action::DriveForward,
        Action::Reverse,
        Action::EnterVehicle,
        Action::ExitVehicle,
        Action::LoadVehicle,
        Action::UnloadVehicle,
        Action::OpenTrunk,
        Action::CloseTrunk,
        Action::OpenVehicleDoor,
        Action::CloseVehicleDoor,
        Action::Start,
        Action::Stop,
        Action::TurnLeft,
        Action::TurnRight,
    ];

    pub fn pair(self) -> PairId {
        match self {
            Action::DriveForward | Action::Reverse => PairId::DriveReverse,
            Action::EnterVehicle | Action::ExitVehicle => PairId::EnterExitVehicle,
            Action::LoadVehicle | Action::UnloadVehicle => PairId::LoadUnloadVehicle,
            Action::OpenTrunk | Action::CloseTrunk => PairId::OpenCloseTrunk,
            Action::OpenVehicleDoor | Action::CloseVehicleDoor => PairId::OpenCloseVehicleDoor,
            Action::Start | Action::Stop => PairId::StartStop,
            Action::TurnLeft | Action::TurnRight => PairId::TurnLeftRight,
        }
    }

    pub fn polarity(self) -> Polarity {
        if self.pair().actions()[0] == self {
            Polarity::First
        } else {
            Polarity::Second
        }
    }

    pub fn opposite(self) -> Action {
        let [a, b] = self.pair().actions();
        if a == self {
            b
        } else {
            a
        }
    }

    /// Canonical snake_case label used in manifests.
    pub fn as_str(self) -> &'static str {
        match self {
            Action::DriveForward => "drive_forward",
            Action::Reverse => "reverse",
            Action::EnterVehicle => "enter_vehicle",
            Action::ExitVehicle => "exit_vehicle",
            Action::LoadVehicle => "load_vehicle",
            Action::UnloadVehicle => "unload_vehicle",
            Action::OpenTrunk => "open_trunk",
            Action::CloseTrunk => "close_trunk",
            Action::OpenVehicleDoor => "open_vehicle_door",
            Action::CloseVehicleDoor => "close_vehicle_door",
            Action::Start => "start",
            Action::Stop => "stop",
            Action::TurnLeft => "turn_left",
            Action::TurnRight => "turn_right",
        }
    }

    /// Human-readable name, e.g. "Open vehicle door".
    pub fn display_name(self) -> &'static str {
        match self {
            Action::DriveForward => "Drive forward",
            Action::Reverse => "Reverse",
            Action::EnterVehicle => "Enter vehicle",
            Action::ExitVehicle => "Exit vehicle",
            Action::LoadVehicle => "Load vehicle",
            Action::UnloadVehicle => "Unload vehicle",
            Action::OpenTrunk => "Open trunk",
            Action::CloseTrunk => "Close trunk",
            Action::OpenVehicleDoor => "Open vehicle door",
            Action::CloseVehicleDoor => "Close vehicle door",
            Action::Start => "Start",
            Action::Stop => "Stop",
            Action::TurnLeft => "Turn left",
            Action::TurnRight => "Turn right",
        }
    }

    /// Resolve a label from the canonical vocabulary, the display names, or the
    /// native MEVA / VIRAT activity names. Anything else is rejected.
    pub fn from_label(label: &str) -> Option<Action> {
        let norm: String = label
            .trim()
            .chars()
            .map(|c| match c {
                ' ' | '-' => '_',
                c => c.to_ascii_lowercase(),
            })
            .collect();
        let action = match norm.as_str() {
            "drive_forward" | "vehicle_moving" | "vehicle_drives_forward" => Action::DriveForward,
            "reverse" | "vehicle_reversing" => Action::Reverse,
            "enter_vehicle" | "person_enters_vehicle" | "getting_into_vehicle" => Action::EnterVehicle,
            "exit_vehicle" | "person_exits_vehicle" | "getting_out_of_vehicle" => Action::ExitVehicle,
            "load_vehicle" | "person_loads_vehicle" | "loading" => Action::LoadVehicle,
            "unload_vehicle" | "person_unloads_vehicle" | "unloading" => Action::UnloadVehicle,
            "open_trunk" | "person_opens_trunk" | "opening_trunk" => Action::OpenTrunk,
            "close_trunk" | "person_closes_trunk" | "closing_trunk" => Action::CloseTrunk,
            "open_vehicle_door" | "person_opens_vehicle_door" => Action::OpenVehicleDoor,
            "close_vehicle_door" | "person_closes_vehicle_door" => Action::CloseVehicleDoor,
            "start" | "vehicle_starting" => Action::Start,
            "stop" | "vehicle_stopping" => Action::Stop,
            "turn_left" | "vehicle_turning_left" => Action::TurnLeft,
            "turn_right" | "vehicle_turning_right" => Action::TurnRight,
            _ => return None,
        };
        Some(action)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown action label `{0}`")]
pub struct UnknownAction(pub String);

impl FromStr for Action {
    type Err = UnknownAction;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::from_label(s).ok_or_else(|| UnknownAction(s.to_string()))
    }
}

/// Published number of intra-pair samples per action class (2,300 in total).
pub const INTRA_PAIR_CLASS_COUNTS: [(Action, usize); 14] = [
    (Action::OpenVehicleDoor, 303),
    (Action::CloseVehicleDoor, 301),
    (Action::EnterVehicle, 261),
    (Action::ExitVehicle, 212),
    (Action::TurnLeft, 252),
    (Action::TurnRight, 204),
    (Action::Start, 167),
    (Action::Stop, 215),
    (Action::DriveForward, 83),
    (Action::Reverse, 90),
    (Action::LoadVehicle, 54),
    (Action::UnloadVehicle, 61),
    (Action::OpenTrunk, 49),
    (Action::CloseTrunk, 48),
];
