//! Byte-level codec for the common control messages.
//!
//! Every frame uses a 29-bit extended identifier. Multi-byte fields are
//! little-endian two's-complement integers on a fixed scaling grid:
//!
//! | id    | message        | dlc | layout                                          |
//! |-------|----------------|-----|-------------------------------------------------|
//! | 0x100 | VelocityCmd    | 4   | v: i16 mm/s, w: i16 mrad/s                      |
//! | 0x101 | VesselCmd      | 2   | angle: i16 centidegree                          |
//! | 0x110 | JointVelCmd    | 5   | joint: u8, vel: i16 mrad/s, valve: i16 permille |
//! | 0x200 | OdomTelemetry  | 4   | v: i16 mm/s, w: i16 mrad/s                      |
//! | 0x201 | GnssTelemetry  | 8   | lat: i32 1e-7 deg, lon: i32 1e-7 deg            |
//! | 0x202 | GnssAltitude   | 4   | alt: i32 mm                                     |
//! | 0x210 | JointTelemetry | 5   | joint: u8, angle: i32 microrad                  |
//! | 0x2FF | EStop          | 0   |                                                 |
//!
//! Joint indices are 0 swing, 1 boom, 2 arm, 3 bucket. Telemetry additionally
//! uses index 4 for the crawler dump's vessel tilt.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ID_VELOCITY_CMD: u32 = 0x100;
pub const ID_VESSEL_CMD: u32 = 0x101;
pub const ID_JOINT_VEL_CMD: u32 = 0x110;
pub const ID_ODOM: u32 = 0x200;
pub const ID_GNSS: u32 = 0x201;
pub const ID_GNSS_ALT: u32 = 0x202;
pub const ID_JOINT_TELEMETRY: u32 = 0x210;
pub const ID_ESTOP: u32 = 0x2FF;

pub const MAX_EXTENDED_ID: u32 = (1 << 29) - 1;

/// Joint index carrying the vessel tilt in [`Message::JointTelemetry`].
pub const VESSEL_JOINT: u8 = 4;

const MM: f64 = 1000.0;
const MRAD: f64 = 1000.0;
const CENTIDEG: f64 = 100.0;
const GEO: f64 = 1e7;
const URAD: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("field `{field}` value {value} is outside the representable range")]
    RangeOverflow { field: &'static str, value: String },
    #[error("unknown message id {0:#x}")]
    UnknownMsgId(u32),
    #[error("message {id:#x} expects dlc {expected}, got {actual}")]
    DlcMismatch { id: u32, expected: u8, actual: u8 },
    #[error("invalid frame: {0}")]
    InvalidFrame(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Command,
    Telemetry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CatalogEntry {
    pub id: u32,
    pub name: &'static str,
    pub direction: Direction,
    pub dlc: u8,
}

pub const CATALOG: [CatalogEntry; 8] = [
    CatalogEntry { id: ID_VELOCITY_CMD, name: "VelocityCmd", direction: Direction::Command, dlc: 4 },
    CatalogEntry { id: ID_VESSEL_CMD, name: "VesselCmd", direction: Direction::Command, dlc: 2 },
    CatalogEntry { id: ID_JOINT_VEL_CMD, name: "JointVelCmd", direction: Direction::Command, dlc: 5 },
    CatalogEntry { id: ID_ODOM, name: "OdomTelemetry", direction: Direction::Telemetry, dlc: 4 },
    CatalogEntry { id: ID_GNSS, name: "GnssTelemetry", direction: Direction::Telemetry, dlc: 8 },
    CatalogEntry { id: ID_GNSS_ALT, name: "GnssAltitude", direction: Direction::Telemetry, dlc: 4 },
    CatalogEntry { id: ID_JOINT_TELEMETRY, name: "JointTelemetry", direction: Direction::Telemetry, dlc: 5 },
    CatalogEntry { id: ID_ESTOP, name: "EStop", direction: Direction::Command, dlc: 0 },
];

pub fn catalog_entry(id: u32) -> Option<&'static CatalogEntry> {
    CATALOG.iter().find(|e| e.id == id)
}

/// One CAN-style frame crossing the machine boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ControlFrame {
    id: u32,
    dlc: u8,
    data: [u8; 8],
}

impl ControlFrame {
    pub fn new(id: u32, payload: &[u8]) -> Result<Self, CodecError> {
        if id > MAX_EXTENDED_ID {
            return Err(CodecError::InvalidFrame("identifier exceeds 29 bits"));
        }
        if payload.len() > 8 {
            return Err(CodecError::InvalidFrame("payload longer than 8 bytes"));
        }
        let mut data = [0u8; 8];
        data[..payload.len()].copy_from_slice(payload);
        Ok(Self { id, dlc: payload.len() as u8, data })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn dlc(&self) -> u8 {
        self.dlc
    }

    pub fn payload(&self) -> &[u8] {
        &self.data[..self.dlc as usize]
    }

    pub fn payload_hex(&self) -> String {
        self.payload().iter().map(|b| format!("{b:02X}")).collect()
    }
}

impl std::fmt::Display for ControlFrame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:03X}#{}", self.id, self.payload_hex())
    }
}

/// Typed view of a catalog message in SI units (m, rad, s, deg for geodetic).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Message {
    VelocityCmd { v: f64, w: f64 },
    VesselCmd { angle: f64 },
    JointVelCmd { joint: u8, vel: f64, valve: i16 },
    OdomTelemetry { v: f64, w: f64 },
    GnssTelemetry { lat: f64, lon: f64 },
    GnssAltitude { alt: f64 },
    JointTelemetry { joint: u8, angle: f64 },
    EStop,
}

impl Message {
    pub fn id(&self) -> u32 {
        match self {
            Message::VelocityCmd { .. } => ID_VELOCITY_CMD,
            Message::VesselCmd { .. } => ID_VESSEL_CMD,
            Message::JointVelCmd { .. } => ID_JOINT_VEL_CMD,
            Message::OdomTelemetry { .. } => ID_ODOM,
            Message::GnssTelemetry { .. } => ID_GNSS,
            Message::GnssAltitude { .. } => ID_GNSS_ALT,
            Message::JointTelemetry { .. } => ID_JOINT_TELEMETRY,
            Message::EStop => ID_ESTOP,
        }
    }

    /// True for actuation commands that would move a machine.
    pub fn is_nonzero_motion(&self) -> bool {
        match *self {
            Message::VelocityCmd { v, w } => v != 0.0 || w != 0.0,
            Message::JointVelCmd { vel, valve, .. } => vel != 0.0 || valve != 0,
            _ => false,
        }
    }
}

fn scaled<I>(field: &'static str, value: f64, factor: f64) -> Result<I, CodecError>
where
    I: TryFrom<i64>,
{
    let s = (value * factor).round();
    let overflow = || CodecError::RangeOverflow { field, value: value.to_string() };
    if !s.is_finite() || s.abs() > 9.0e15 {
        return Err(overflow());
    }
    I::try_from(s as i64).map_err(|_| overflow())
}

fn joint_index(field: &'static str, joint: u8, max: u8) -> Result<u8, CodecError> {
    if joint > max {
        return Err(CodecError::RangeOverflow { field, value: joint.to_string() });
    }
    Ok(joint)
}

pub fn encode(message: &Message) -> Result<ControlFrame, CodecError> {
    let mut buf = Vec::with_capacity(8);
    match *message {
        Message::VelocityCmd { v, w } | Message::OdomTelemetry { v, w } => {
            buf.extend_from_slice(&scaled::<i16>("v", v, MM)?.to_le_bytes());
            buf.extend_from_slice(&scaled::<i16>("w", w, MRAD)?.to_le_bytes());
        }
        Message::VesselCmd { angle } => {
            buf.extend_from_slice(&scaled::<i16>("angle", angle.to_degrees(), CENTIDEG)?.to_le_bytes());
        }
        Message::JointVelCmd { joint, vel, valve } => {
            buf.push(joint_index("joint", joint, 3)?);
            buf.extend_from_slice(&scaled::<i16>("vel", vel, MRAD)?.to_le_bytes());
            if !(-1000..=1000).contains(&valve) {
                return Err(CodecError::RangeOverflow { field: "valve", value: valve.to_string() });
            }
            buf.extend_from_slice(&valve.to_le_bytes());
        }
        Message::GnssTelemetry { lat, lon } => {
            if lat.abs() > 90.0 {
                return Err(CodecError::RangeOverflow { field: "lat", value: lat.to_string() });
            }
            if lon.abs() > 180.0 {
                return Err(CodecError::RangeOverflow { field: "lon", value: lon.to_string() });
            }
            buf.extend_from_slice(&scaled::<i32>("lat", lat, GEO)?.to_le_bytes());
            buf.extend_from_slice(&scaled::<i32>("lon", lon, GEO)?.to_le_bytes());
        }
        Message::GnssAltitude { alt } => {
            buf.extend_from_slice(&scaled::<i32>("alt", alt, MM)?.to_le_bytes());
        }
        Message::JointTelemetry { joint, angle } => {
            buf.push(joint_index("joint", joint, VESSEL_JOINT)?);
            buf.extend_from_slice(&scaled::<i32>("angle", angle, URAD)?.to_le_bytes());
        }
        Message::EStop => {}
    }
    ControlFrame::new(message.id(), &buf)
}

fn i16_at(p: &[u8], at: usize) -> i16 {
    i16::from_le_bytes([p[at], p[at + 1]])
}

fn i32_at(p: &[u8], at: usize) -> i32 {
    i32::from_le_bytes([p[at], p[at + 1], p[at + 2], p[at + 3]])
}

pub fn decode(frame: &ControlFrame) -> Result<Message, CodecError> {
    let entry = catalog_entry(frame.id()).ok_or(CodecError::UnknownMsgId(frame.id()))?;
    if entry.dlc != frame.dlc() {
        return Err(CodecError::DlcMismatch { id: entry.id, expected: entry.dlc, actual: frame.dlc() });
    }
    let p = frame.payload();
    let msg = match entry.id {
        ID_VELOCITY_CMD => Message::VelocityCmd {
            v: i16_at(p, 0) as f64 / MM,
            w: i16_at(p, 2) as f64 / MRAD,
        },
        ID_ODOM => Message::OdomTelemetry {
            v: i16_at(p, 0) as f64 / MM,
            w: i16_at(p, 2) as f64 / MRAD,
        },
        ID_VESSEL_CMD => Message::VesselCmd {
            angle: (i16_at(p, 0) as f64 / CENTIDEG).to_radians(),
        },
        ID_JOINT_VEL_CMD => {
            let valve = i16_at(p, 3);
            if !(-1000..=1000).contains(&valve) {
                return Err(CodecError::RangeOverflow { field: "valve", value: valve.to_string() });
            }
            Message::JointVelCmd {
                joint: joint_index("joint", p[0], 3)?,
                vel: i16_at(p, 1) as f64 / MRAD,
                valve,
            }
        }
        ID_GNSS => Message::GnssTelemetry {
            lat: i32_at(p, 0) as f64 / GEO,
            lon: i32_at(p, 4) as f64 / GEO,
        },
        ID_GNSS_ALT => Message::GnssAltitude { alt: i32_at(p, 0) as f64 / MM },
        ID_JOINT_TELEMETRY => Message::JointTelemetry {
            joint: joint_index("joint", p[0], VESSEL_JOINT)?,
            angle: i32_at(p, 1) as f64 / URAD,
        },
        ID_ESTOP => Message::EStop,
        other => return Err(CodecError::UnknownMsgId(other)),
    };
    Ok(msg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn velocity_cmd_hand_encoded() {
        // 1000 mm/s = 0x03E8, 100 mrad/s = 0x0064, little-endian
        let f = encode(&Message::VelocityCmd { v: 1.0, w: 0.1 }).unwrap();
        assert_eq!(f.id(), 0x100);
        assert_eq!(f.payload(), &[0xE8, 0x03, 0x64, 0x00]);
    }

    #[test]
    fn zero_velocity_is_all_zero_bytes() {
        let f = encode(&Message::VelocityCmd { v: 0.0, w: 0.0 }).unwrap();
        assert_eq!(f.payload(), &[0, 0, 0, 0]);
    }

    #[test]
    fn velocity_out_of_i16_range_overflows() {
        let err = encode(&Message::VelocityCmd { v: 40.0, w: 0.0 }).unwrap_err();
        assert!(matches!(err, CodecError::RangeOverflow { field: "v", .. }));
        assert!(encode(&Message::VelocityCmd { v: 32.767, w: -32.768 }).is_ok());
        assert!(encode(&Message::VelocityCmd { v: f64::NAN, w: 0.0 }).is_err());
    }

    #[test]
    fn negative_values_are_twos_complement() {
        let f = encode(&Message::VelocityCmd { v: -1.0, w: -0.001 }).unwrap();
        assert_eq!(f.payload(), &[0x18, 0xFC, 0xFF, 0xFF]);
    }

    #[test]
    fn gnss_roundtrip_on_grid() {
        let m = Message::GnssTelemetry { lat: 36.1234567, lon: 140.0000001 };
        assert_eq!(decode(&encode(&m).unwrap()).unwrap(), m);
    }

    #[test]
    fn dlc_mismatch_rejected() {
        let f = ControlFrame::new(0x100, &[1, 2, 3]).unwrap();
        assert_eq!(
            decode(&f).unwrap_err(),
            CodecError::DlcMismatch { id: 0x100, expected: 4, actual: 3 }
        );
    }

    #[test]
    fn unknown_id_rejected() {
        let f = ControlFrame::new(0x7FF, &[]).unwrap();
        assert_eq!(decode(&f).unwrap_err(), CodecError::UnknownMsgId(0x7FF));
    }

    #[test]
    fn frame_id_limited_to_29_bits() {
        assert!(ControlFrame::new(1 << 29, &[]).is_err());
        assert!(ControlFrame::new(MAX_EXTENDED_ID, &[]).is_ok());
        assert!(ControlFrame::new(0x100, &[0; 9]).is_err());
    }

    #[test]
    fn joint_cmd_layout() {
        let f = encode(&Message::JointVelCmd { joint: 2, vel: -0.5, valve: -1000 }).unwrap();
        assert_eq!(f.payload(), &[0x02, 0x0C, 0xFE, 0x18, 0xFC]);
        assert!(encode(&Message::JointVelCmd { joint: 4, vel: 0.0, valve: 0 }).is_err());
        assert!(encode(&Message::JointVelCmd { joint: 0, vel: 0.0, valve: 1001 }).is_err());
    }

    #[test]
    fn estop_is_empty() {
        let f = encode(&Message::EStop).unwrap();
        assert_eq!((f.id(), f.dlc()), (0x2FF, 0));
        assert_eq!(f.to_string(), "2FF#");
    }
}
